"""Hierarchical budget policy optimisation on a synthetic reasoning-length task."""

from hbpo.advantage import AdvantageSet, RolloutRecord, SubgroupBatch, combined_advantage
from hbpo.env import EnvConfig, Problem
from hbpo.hierarchy import MINIMAL, BudgetSchedule, make_schedule, partition, render_prompt
from hbpo.policy import Context, PolicyParams
from hbpo.reward import RewardConfig, complexity_threshold, f1, f2, reward
from hbpo.trainer import StepReport, TrainerConfig, train

__version__ = "0.1.0"

__all__ = [
    "AdvantageSet", "BudgetSchedule", "Context", "EnvConfig", "MINIMAL", "PolicyParams",
    "Problem", "RewardConfig", "RolloutRecord", "StepReport", "SubgroupBatch", "TrainerConfig",
    "combined_advantage", "complexity_threshold", "f1", "f2", "make_schedule", "partition",
    "render_prompt", "reward", "train",
]
