"""Budget schedules, rollout partitioning and budget prompts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

from hbpo.errors import ConfigError
from hbpo.reward import BudgetLevel

PROMPT_TEMPLATE = "I will answer the question within {b} tokens"
MINIMAL_PROMPT = "I will answer the question with minimal tokens"

# Budgets used when the mean target is 1536 and k == 4.
DEFAULT_BUDGETS = (512, 1024, 2048, 2560)
DEFAULT_LOW_BUDGET = 512


class _Minimal:
    """Sentinel for the minimal-tokens efficiency prompt."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MINIMAL"


MINIMAL = _Minimal()


@dataclass(frozen=True)
class BudgetSchedule:
    budgets: tuple[BudgetLevel, ...] = DEFAULT_BUDGETS
    rollouts_per_query: int = 16

    def __post_init__(self) -> None:
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        if not self.budgets:
            raise ConfigError("at least one budget is required", "schedule.budgets")
        if any(b < 1 for b in self.budgets):
            raise ConfigError(f"budgets must be >= 1, got {list(self.budgets)}",
                              "schedule.budgets")
        if any(b2 <= b1 for b1, b2 in zip(self.budgets, self.budgets[1:])):
            raise ConfigError(f"budgets must be strictly ascending, got {list(self.budgets)}",
                              "schedule.budgets")
        if self.rollouts_per_query < 1 or self.rollouts_per_query % self.k:
            raise ConfigError(
                f"{self.rollouts_per_query} rollouts cannot be split evenly into {self.k} subgroups",
                "schedule.rollouts_per_query")

    @property
    def k(self) -> int:
        return len(self.budgets)

    @property
    def subgroup_size(self) -> int:
        return self.rollouts_per_query // self.k

    def validate_against(self, l_max: int) -> None:
        if self.budgets[-1] > l_max:
            raise ConfigError(f"budget {self.budgets[-1]} exceeds l_max={l_max}",
                              "schedule.budgets")


@dataclass(frozen=True)
class BudgetPrompt:
    text: str
    budget: Union[BudgetLevel, _Minimal]


def partition(query_id, schedule: BudgetSchedule) -> list[tuple[int, BudgetLevel]]:
    """Assign each of the ``n`` rollout slots of a query to a subgroup.

    Slot ``j`` lands in subgroup ``j // (n / k)``.  The query id does not
    affect the layout; it is accepted so callers can treat this as a
    per-query operation.
    """
    size = schedule.subgroup_size
    return [(j // size, schedule.budgets[j // size]) for j in range(schedule.rollouts_per_query)]


def render_prompt(b: Union[BudgetLevel, _Minimal]) -> BudgetPrompt:
    if b is MINIMAL:
        return BudgetPrompt(MINIMAL_PROMPT, MINIMAL)
    return BudgetPrompt(PROMPT_TEMPLATE.format(b=int(b)), int(b))


def make_schedule(k: int, mean_target: int, n: int, l_max: int) -> BudgetSchedule:
    """Build a ``k``-budget schedule whose budgets average ``mean_target``.

    k=1 gives the mean itself, k=2 the pair ``{512, 2*mean - 512}``, and
    k=4 at mean 1536 the standard ``{512, 1024, 2048, 2560}``.  Every other
    case spaces budgets evenly over the same symmetric span.  Rounding
    residue is absorbed by the largest budget so the mean stays exact.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}", "sweep.k")
    if n % k:
        raise ConfigError(f"{n} rollouts cannot be split evenly into {k} subgroups",
                          "schedule.rollouts_per_query")
    if k == 4 and mean_target == 1536:
        budgets = list(DEFAULT_BUDGETS)
    elif k == 1:
        budgets = [int(mean_target)]
    else:
        low = min(DEFAULT_LOW_BUDGET, math.ceil(mean_target / 2))
        high = 2 * mean_target - low
        step = (high - low) / (k - 1)
        budgets = [int(round(low + i * step)) for i in range(k)]
        budgets[-1] += k * mean_target - sum(budgets)
    if budgets[0] <= 0:
        raise ConfigError(f"budget {budgets[0]} must be positive", "schedule.budgets")
    if budgets[-1] > l_max:
        raise ConfigError(f"budget {budgets[-1]} exceeds l_max={l_max}", "schedule.budgets")
    return BudgetSchedule(tuple(budgets), n)
