"""Budget-aware piecewise reward.

A correct response of length ``n`` generated under budget ``b`` earns

* ``f2(b) = beta * cos(pi * b / (2 * l_max))`` when ``n <= b``,
* ``f1(n, b) = beta * cos(pi * n / (2 * l_max)) - alpha * |n - b|`` when
  ``b < n <= l_max``,

and anything else (wrong, or longer than ``l_max``) earns zero.  For a fixed
length, the reward therefore ranks budgets differently: short responses favour
small budgets, long responses favour large ones.  ``complexity_threshold``
finds the length at which that preference flips for a pair of budgets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from hbpo.errors import ConfigError, DomainError

BudgetLevel = int

SCAN_STRIDE = 16
THRESHOLD_TOL = 0.5


@dataclass(frozen=True)
class RewardConfig:
    beta: float = 1.0
    alpha: float = 1e-4
    l_max: int = 4096

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ConfigError(f"must be > 0, got {self.beta}", "reward.beta")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"must be >= 0, got {self.alpha}", "reward.alpha")
        if int(self.l_max) != self.l_max or self.l_max < 1:
            raise ConfigError(f"must be a positive integer, got {self.l_max}", "reward.l_max")

    def cosine(self, n: float) -> float:
        return self.beta * math.cos(math.pi * n / (2 * self.l_max))


class Branch(enum.Enum):
    OVER_BUDGET_CORRECT = "f1"
    WITHIN_BUDGET_CORRECT = "f2"
    ZERO = "zero"


@dataclass(frozen=True)
class RewardOutcome:
    value: float
    branch: Branch


def f2(b: BudgetLevel, cfg: RewardConfig) -> float:
    """Reward for a correct response that stays within budget ``b``."""
    if b < 0 or b > cfg.l_max:
        raise DomainError(f"budget {b} outside [0, l_max={cfg.l_max}]")
    return cfg.cosine(b)


def f1(n_gen: float, b: BudgetLevel, cfg: RewardConfig) -> float:
    """Reward for a correct response that overruns budget ``b``.

    Not clamped: far overruns can go negative.
    """
    if n_gen < 0 or n_gen > cfg.l_max:
        raise DomainError(f"n_gen {n_gen} outside [0, l_max={cfg.l_max}]")
    return cfg.cosine(n_gen) - cfg.alpha * abs(n_gen - b)


def reward(n_gen: float, correct: bool, b: BudgetLevel, cfg: RewardConfig) -> RewardOutcome:
    if n_gen < 0:
        raise DomainError(f"n_gen must be >= 0, got {n_gen}")
    if not correct or n_gen > cfg.l_max:
        return RewardOutcome(0.0, Branch.ZERO)
    if n_gen > b:
        return RewardOutcome(f1(n_gen, b, cfg), Branch.OVER_BUDGET_CORRECT)
    return RewardOutcome(f2(b, cfg), Branch.WITHIN_BUDGET_CORRECT)


def reward_value(n_gen: float, correct: bool, b: BudgetLevel, cfg: RewardConfig) -> float:
    return reward(n_gen, correct, b, cfg).value


def reward_array(n_gen: np.ndarray, correct: np.ndarray, budgets: np.ndarray,
                 cfg: RewardConfig) -> np.ndarray:
    """Elementwise ``reward`` over aligned arrays.

    Uses the same scalar expressions as ``f1``/``f2`` so results are
    bit-identical to the scalar path.
    """
    n_gen = np.asarray(n_gen, dtype=float)
    correct = np.broadcast_to(np.asarray(correct, dtype=bool), n_gen.shape)
    budgets = np.broadcast_to(np.asarray(budgets, dtype=float), n_gen.shape)
    values = [reward_value(n, c, b, cfg) for n, c, b in
              zip(n_gen.ravel().tolist(), correct.ravel().tolist(), budgets.ravel().tolist())]
    return np.array(values, dtype=float).reshape(n_gen.shape)


def _check_ascending(budgets: Sequence[BudgetLevel]) -> None:
    if len(budgets) == 0:
        raise ConfigError("budget list is empty", "schedule.budgets")
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ConfigError(f"budgets must be strictly ascending, got {list(budgets)}",
                          "schedule.budgets")


def budget_preference(n_gen: float, budgets: Sequence[BudgetLevel],
                      cfg: RewardConfig) -> list[tuple[BudgetLevel, float]]:
    """Rank budgets by the reward a correct length-``n_gen`` response earns.

    Highest reward first; ties go to the smaller budget.
    """
    _check_ascending(budgets)
    if n_gen > cfg.l_max:
        raise DomainError(f"n_gen {n_gen} exceeds l_max={cfg.l_max}")
    scored = [(b, reward_value(n_gen, True, b, cfg)) for b in budgets]
    return sorted(scored, key=lambda item: (-item[1], item[0]))


def complexity_threshold(b_low: BudgetLevel, b_high: BudgetLevel,
                         cfg: RewardConfig) -> float | None:
    """Smallest length at which ``b_high`` earns at least as much as ``b_low``.

    Coarse scan over (0, l_max] at ``SCAN_STRIDE`` tokens, then bisection on
    the bracketing interval down to ``THRESHOLD_TOL`` tokens.  The returned
    point always satisfies the crossing condition.  ``None`` if the curves
    never cross.
    """
    if not b_low < b_high:
        raise DomainError(f"need b_low < b_high, got {b_low}, {b_high}")

    def gap(n: float) -> float:
        return reward_value(n, True, b_high, cfg) - reward_value(n, True, b_low, cfg)

    grid = list(range(SCAN_STRIDE, cfg.l_max + 1, SCAN_STRIDE))
    if not grid or grid[-1] != cfg.l_max:
        grid.append(cfg.l_max)

    lo = 0.0
    if gap(lo) >= 0:
        return lo
    for n in grid:
        if gap(n) >= 0:
            hi = float(n)
            break
        lo = float(n)
    else:
        return None

    while hi - lo > THRESHOLD_TOL:
        mid = 0.5 * (lo + hi)
        if gap(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def reward_curves(budgets: Sequence[BudgetLevel], cfg: RewardConfig,
                  lengths: Iterable[int] | None = None) -> list[list[float]]:
    """Rows of ``[n_gen, R(b_1|n), ..., R(b_k|n)]`` for correct responses."""
    _check_ascending(budgets)
    lengths = range(1, cfg.l_max + 1) if lengths is None else lengths
    return [[n, *(reward_value(n, True, b, cfg) for b in budgets)] for n in lengths]


def pairwise_thresholds(budgets: Sequence[BudgetLevel],
                        cfg: RewardConfig) -> list[tuple[int, int, float | None]]:
    _check_ascending(budgets)
    return [(lo, hi, complexity_threshold(lo, hi, cfg)) for lo, hi in combinations(budgets, 2)]
