"""Synthetic reasoning-length environment.

Problems come in difficulty tiers.  Each tier has a required length; the
chance of answering correctly rises along a sigmoid as the response length
passes it.  "Tokens" here are just counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hbpo.errors import ConfigError
from hbpo.rng import RngState


@dataclass(frozen=True)
class EnvConfig:
    tiers: int = 3
    required_lengths: tuple[int, ...] = (128, 512, 1536)
    p_floor: float = 0.05
    p_ceil: float = 0.95
    tau: float = 64.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "required_lengths", tuple(int(x) for x in self.required_lengths))
        if self.tiers < 1:
            raise ConfigError(f"must be >= 1, got {self.tiers}", "env.tiers")
        if len(self.required_lengths) != self.tiers:
            raise ConfigError(f"expected {self.tiers} entries, got {len(self.required_lengths)}",
                              "env.required_lengths")
        lengths = self.required_lengths
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ConfigError(f"must be strictly increasing, got {list(lengths)}",
                              "env.required_lengths")
        if not 0 <= self.p_floor <= self.p_ceil <= 1:
            raise ConfigError(f"need 0 <= p_floor <= p_ceil <= 1, got "
                              f"{self.p_floor}, {self.p_ceil}", "env.p_floor")
        if not self.tau > 0:
            raise ConfigError(f"must be > 0, got {self.tau}", "env.tau")
        if self.seed < 0:
            raise ConfigError(f"must be >= 0, got {self.seed}", "env.seed")

    def validate_against(self, l_max: int) -> None:
        if self.required_lengths[-1] >= l_max:
            raise ConfigError(f"hardest tier length {self.required_lengths[-1]} must be "
                              f"below l_max={l_max}", "env.required_lengths")


@dataclass(frozen=True)
class Problem:
    id: int
    tier: int
    required_length: int

    def to_dict(self) -> dict:
        return {"id": self.id, "tier": self.tier, "L_req": self.required_length}


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def correctness_prob(n_gen: float, problem: Problem, cfg: EnvConfig) -> float:
    x = (n_gen - problem.required_length) / cfg.tau
    return cfg.p_floor + (cfg.p_ceil - cfg.p_floor) * _sigmoid(x)


def correctness_probs(n_gen: np.ndarray, required_length: float, cfg: EnvConfig) -> np.ndarray:
    x = (np.asarray(n_gen, dtype=float) - required_length) / cfg.tau
    # Split by sign so exp never overflows.
    sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return cfg.p_floor + (cfg.p_ceil - cfg.p_floor) * sig


def sample_outcome(n_gen: float, problem: Problem, cfg: EnvConfig,
                   rng: RngState) -> tuple[bool, RngState]:
    u, rng = rng.uniform()
    return u < correctness_prob(n_gen, problem, cfg), rng


def sample_outcomes(n_gen: np.ndarray, problem: Problem, cfg: EnvConfig,
                    gen: np.random.Generator) -> np.ndarray:
    """Vectorised Bernoulli draws from one keyed generator."""
    u = gen.random(len(n_gen))
    return u < correctness_probs(n_gen, problem.required_length, cfg)


def problem_for_tier(problem_id: int, tier: int, cfg: EnvConfig) -> Problem:
    return Problem(problem_id, tier, cfg.required_lengths[tier - 1])


def make_dataset(n_problems: int, cfg: EnvConfig, gen: np.random.Generator | RngState,
                 start_id: int = 0) -> list[Problem]:
    if n_problems < 1:
        raise ConfigError(f"need at least one problem, got {n_problems}", "n_problems")
    if isinstance(gen, RngState):
        gen = gen.generator()
    tiers = gen.integers(1, cfg.tiers + 1, size=n_problems)
    return [problem_for_tier(start_id + i, int(t), cfg) for i, t in enumerate(tiers)]


def dump_dataset(problems: list[Problem], path: str | Path) -> None:
    with open(path, "w") as fh:
        for p in problems:
            fh.write(json.dumps(p.to_dict()) + "\n")
