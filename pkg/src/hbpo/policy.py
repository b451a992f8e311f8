"""Categorical length policy.

The policy picks one of a fixed set of length bins.  Its logits for a
problem of tier ``d`` under budget feature ``g`` are

    theta_base[d - 1] + g * theta_budget

with ``g = b / l_max`` for a budget prompt, ``0`` for natural inference and
``-1`` for the minimal-tokens prompt.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from hbpo.errors import ConfigError, DomainError
from hbpo.rng import RngState

DEFAULT_BINS = (64, 128, 256, 512, 1024, 1536, 2048, 3072)

NATURAL_FEATURE = 0.0
MINIMAL_FEATURE = -1.0


@dataclass(frozen=True)
class Context:
    tier: int
    budget_feature: float = NATURAL_FEATURE

    def __post_init__(self) -> None:
        g = self.budget_feature
        if not (g in (MINIMAL_FEATURE, NATURAL_FEATURE) or 0 < g <= 1):
            raise DomainError(f"budget_feature must be -1, 0 or in (0, 1], got {g}")

    @classmethod
    def for_budget(cls, tier: int, budget: int, l_max: int) -> Context:
        return cls(tier, budget / l_max)


@dataclass
class PolicyParams:
    theta_base: np.ndarray
    theta_budget: np.ndarray
    bin_lengths: tuple[int, ...] = DEFAULT_BINS

    def __post_init__(self) -> None:
        self.theta_base = np.asarray(self.theta_base, dtype=float)
        self.theta_budget = np.asarray(self.theta_budget, dtype=float)
        self.bin_lengths = tuple(int(b) for b in self.bin_lengths)
        bins = len(self.bin_lengths)
        if bins < 2:
            raise ConfigError(f"need at least 2 bins, got {bins}", "policy.bin_lengths")
        if any(b <= a for a, b in zip(self.bin_lengths, self.bin_lengths[1:])):
            raise ConfigError(f"must be strictly ascending, got {list(self.bin_lengths)}",
                              "policy.bin_lengths")
        if self.theta_base.ndim != 2 or self.theta_base.shape[1] != bins:
            raise ConfigError(f"theta_base shape {self.theta_base.shape} does not match "
                              f"{bins} bins", "policy.theta_base")
        if self.theta_budget.shape != (bins,):
            raise ConfigError(f"theta_budget shape {self.theta_budget.shape} does not match "
                              f"{bins} bins", "policy.theta_budget")

    @classmethod
    def zeros(cls, tiers: int, bin_lengths: Sequence[int] = DEFAULT_BINS) -> PolicyParams:
        bins = len(bin_lengths)
        return cls(np.zeros((tiers, bins)), np.zeros(bins), tuple(bin_lengths))

    @property
    def tiers(self) -> int:
        return self.theta_base.shape[0]

    @property
    def bins(self) -> int:
        return len(self.bin_lengths)

    def copy(self) -> PolicyParams:
        return PolicyParams(self.theta_base.copy(), self.theta_budget.copy(), self.bin_lengths)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.theta_base)) and np.all(np.isfinite(self.theta_budget)))

    def to_checkpoint(self) -> dict:
        return {"arrays": [
            {"name": "theta_base", "shape": list(self.theta_base.shape),
             "values": self.theta_base.ravel().tolist()},
            {"name": "theta_budget", "shape": list(self.theta_budget.shape),
             "values": self.theta_budget.tolist()},
            {"name": "bin_lengths", "shape": [self.bins], "values": list(self.bin_lengths)},
        ]}

    @classmethod
    def from_checkpoint(cls, data: dict) -> PolicyParams:
        arrays = {a["name"]: np.asarray(a["values"], dtype=float).reshape(a["shape"])
                  for a in data["arrays"]}
        return cls(arrays["theta_base"], arrays["theta_budget"],
                   tuple(int(b) for b in arrays["bin_lengths"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_checkpoint()))

    @classmethod
    def load(cls, path: str | Path) -> PolicyParams:
        return cls.from_checkpoint(json.loads(Path(path).read_text()))


def _row(ctx: Context, params: PolicyParams) -> int:
    if not 1 <= ctx.tier <= params.tiers:
        raise DomainError(f"unknown tier {ctx.tier} (policy has {params.tiers})")
    return ctx.tier - 1


def logits(ctx: Context, params: PolicyParams) -> np.ndarray:
    return params.theta_base[_row(ctx, params)] + params.theta_budget * ctx.budget_feature


def log_probs(ctx: Context, params: PolicyParams) -> np.ndarray:
    z = logits(ctx, params)
    z = z - z.max()
    return z - math.log(np.exp(z).sum())


def probs(ctx: Context, params: PolicyParams) -> np.ndarray:
    z = logits(ctx, params)
    e = np.exp(z - z.max())
    return e / e.sum()


def log_prob(ctx: Context, a: int, params: PolicyParams) -> float:
    if not 0 <= a < params.bins:
        raise DomainError(f"bin {a} outside [0, {params.bins})")
    return float(log_probs(ctx, params)[a])


def _draw(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p)
    return np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(p) - 1)


def sample(ctx: Context, params: PolicyParams, rng: RngState
           ) -> tuple[int, int, float, RngState]:
    """Draw one bin by inverse CDF; returns ``(bin, n_gen, log_prob, next_rng)``."""
    u, rng = rng.uniform()
    lp = log_probs(ctx, params)
    a = int(_draw(np.exp(lp), np.array([u]))[0])
    return a, params.bin_lengths[a], float(lp[a]), rng


def sample_many(ctx: Context, params: PolicyParams, gen: np.random.Generator, size: int
                ) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` bins from one generator; returns ``(bins, log_probs)``."""
    lp = log_probs(ctx, params)
    a = _draw(np.exp(lp), gen.random(size))
    return a, lp[a]


def grad_log_prob(ctx: Context, a: int, params: PolicyParams) -> PolicyParams:
    """Gradient of ``log pi(a | ctx)`` in the shape of ``params``."""
    if not 0 <= a < params.bins:
        raise DomainError(f"bin {a} outside [0, {params.bins})")
    delta = -probs(ctx, params)
    delta[a] += 1.0
    g_base = np.zeros_like(params.theta_base)
    g_base[_row(ctx, params)] = delta
    return PolicyParams(g_base, delta * ctx.budget_feature, params.bin_lengths)
