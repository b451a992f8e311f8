"""Two-level advantages for hierarchical rollouts.

For subgroup ``i`` with budget ``b_i`` and rewards ``R_i1..R_im``:

    intra_i   = mean_j(R_ij) - f2(b_i)            (shared by the subgroup)
    inter_ij  = (R_ij - mean(R)) / std(R)          (over the whole query)
    A_ij      = intra_i + inter_ij

``std`` is the population standard deviation.  If it falls below
``eps_std`` every inter term is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from hbpo.errors import BatchError, ConfigError
from hbpo.hierarchy import BudgetSchedule
from hbpo.reward import BudgetLevel, RewardConfig, f2

EPS_STD = 1e-8
INTRA_MODES = ("subgroup", "per_record")


@dataclass(frozen=True)
class RolloutRecord:
    subgroup: int
    budget: BudgetLevel
    n_gen: int
    correct: bool
    reward: float
    old_logprob: float = 0.0


@dataclass(frozen=True)
class SubgroupBatch:
    query_id: int | str
    records: tuple[RolloutRecord, ...]
    schedule: BudgetSchedule

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        for r in self.records:
            if not 0 <= r.subgroup < self.schedule.k:
                raise BatchError(f"record subgroup {r.subgroup} outside schedule (k={self.schedule.k})")
            if r.budget != self.schedule.budgets[r.subgroup]:
                raise BatchError(f"record budget {r.budget} does not match subgroup "
                                 f"{r.subgroup} budget {self.schedule.budgets[r.subgroup]}")

    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records], dtype=float)

    def subgroup_index(self) -> np.ndarray:
        return np.array([r.subgroup for r in self.records], dtype=int)


@dataclass
class AdvantageSet:
    mu: np.ndarray
    baselines: np.ndarray
    intra: np.ndarray
    inter: np.ndarray
    combined: np.ndarray
    mean_reward: float
    std_reward: float
    subgroup: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "baselines": self.baselines.tolist(),
            "intra": self.intra.tolist(),
            "inter": self.inter.tolist(),
            "combined": self.combined.tolist(),
            "mean_reward": self.mean_reward,
            "std_reward": self.std_reward,
        }


def subgroup_stats(rewards: np.ndarray, subgroup: np.ndarray, baselines: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Per-subgroup mean reward and intra advantage."""
    k = len(baselines)
    counts = np.bincount(subgroup, minlength=k)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        raise BatchError(f"empty subgroup(s): {empty}")
    mu = np.bincount(subgroup, weights=rewards, minlength=k) / counts
    return mu, mu - baselines


def standardize(rewards: np.ndarray, eps_std: float = EPS_STD) -> tuple[np.ndarray, float, float]:
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size < 2:
        raise BatchError(f"need at least 2 records, got {rewards.size}")
    mean = float(rewards.mean())
    std = float(rewards.std())
    if std < eps_std:
        return np.zeros_like(rewards), mean, std
    return (rewards - mean) / std, mean, std


def compute_advantages(rewards: np.ndarray, subgroup: np.ndarray, baselines: Sequence[float],
                       eps_std: float = EPS_STD, intra_mode: str = "subgroup") -> AdvantageSet:
    """Array-level advantage computation; the trainer's hot path.

    ``intra_mode="per_record"`` replaces the shared subgroup term with
    ``R_ij - f2(b_i)`` for ablations.
    """
    if intra_mode not in INTRA_MODES:
        raise ConfigError(f"unknown intra_mode {intra_mode!r}", "trainer.intra_mode")
    rewards = np.asarray(rewards, dtype=float)
    subgroup = np.asarray(subgroup, dtype=int)
    baselines = np.asarray(baselines, dtype=float)
    mu, intra = subgroup_stats(rewards, subgroup, baselines)
    inter, mean, std = standardize(rewards, eps_std)
    if intra_mode == "subgroup":
        per_record_intra = intra[subgroup]
    else:
        per_record_intra = rewards - baselines[subgroup]
    return AdvantageSet(mu=mu, baselines=baselines, intra=intra, inter=inter,
                        combined=per_record_intra + inter, mean_reward=mean,
                        std_reward=std, subgroup=subgroup)


def _baselines(batch: SubgroupBatch, cfg: RewardConfig) -> np.ndarray:
    return np.array([f2(b, cfg) for b in batch.schedule.budgets])


def intra_advantage(batch: SubgroupBatch, cfg: RewardConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(mu, baseline, intra)`` arrays indexed by subgroup."""
    baselines = _baselines(batch, cfg)
    mu, intra = subgroup_stats(batch.rewards(), batch.subgroup_index(), baselines)
    return mu, baselines, intra


def inter_advantage(batch: SubgroupBatch, eps_std: float = EPS_STD) -> np.ndarray:
    return standardize(batch.rewards(), eps_std)[0]


def combined_advantage(batch: SubgroupBatch, cfg: RewardConfig, eps_std: float = EPS_STD,
                       intra_mode: str = "subgroup") -> AdvantageSet:
    return compute_advantages(batch.rewards(), batch.subgroup_index(), _baselines(batch, cfg),
                              eps_std=eps_std, intra_mode=intra_mode)
