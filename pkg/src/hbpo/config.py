"""Run configuration: one JSON document, one section per component.

Unknown keys anywhere are rejected so typos in ablation scripts fail loudly.
Every validation error carries the dotted path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

from hbpo.env import EnvConfig
from hbpo.errors import ConfigError
from hbpo.hierarchy import BudgetSchedule
from hbpo.policy import DEFAULT_BINS
from hbpo.reward import RewardConfig
from hbpo.trainer import TrainerConfig


@dataclass(frozen=True)
class EvalConfig:
    n_eval: int = 3000
    seed: int = 12345

    def __post_init__(self) -> None:
        if self.n_eval < 1:
            raise ConfigError(f"must be >= 1, got {self.n_eval}", "eval.n_eval")
        if self.seed < 0:
            raise ConfigError(f"must be >= 0, got {self.seed}", "eval.seed")


@dataclass(frozen=True)
class RunConfig:
    reward: RewardConfig = field(default_factory=RewardConfig)
    schedule: BudgetSchedule = field(default_factory=BudgetSchedule)
    env: EnvConfig = field(default_factory=EnvConfig)
    bin_lengths: tuple[int, ...] = DEFAULT_BINS
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "runs/default"

    def __post_init__(self) -> None:
        l_max = self.reward.l_max
        self.schedule.validate_against(l_max)
        self.env.validate_against(l_max)
        if self.bin_lengths[-1] > l_max:
            raise ConfigError(f"bin {self.bin_lengths[-1]} exceeds l_max={l_max}",
                              "policy.bin_lengths")
        if self.trainer.schedule != self.schedule or self.trainer.reward != self.reward:
            object.__setattr__(self, "trainer",
                               replace(self.trainer, schedule=self.schedule, reward=self.reward))

    def with_schedule(self, schedule: BudgetSchedule, output_dir: str | None = None) -> RunConfig:
        return replace(self, schedule=schedule, output_dir=output_dir or self.output_dir)

    def to_dict(self) -> dict:
        t = self.trainer
        return {
            "reward": {"beta": self.reward.beta, "alpha": self.reward.alpha,
                       "l_max": self.reward.l_max},
            "schedule": {"budgets": list(self.schedule.budgets),
                         "rollouts_per_query": self.schedule.rollouts_per_query},
            "env": {"tiers": self.env.tiers, "required_lengths": list(self.env.required_lengths),
                    "p_floor": self.env.p_floor, "p_ceil": self.env.p_ceil,
                    "tau": self.env.tau, "seed": self.env.seed},
            "policy": {"bin_lengths": list(self.bin_lengths)},
            "trainer": {name: getattr(t, name) for name in _TRAINER_KEYS},
            "eval": {"n_eval": self.eval.n_eval, "seed": self.eval.seed},
            "output_dir": self.output_dir,
        }


# Schema: section -> key -> accepted python types.
_NUM = (int, float)
_INT = (int,)
_SCHEMA: dict[str, dict[str, tuple]] = {
    "reward": {"beta": _NUM, "alpha": _NUM, "l_max": _INT},
    "schedule": {"budgets": (list,), "rollouts_per_query": _INT},
    "env": {"tiers": _INT, "required_lengths": (list,), "p_floor": _NUM, "p_ceil": _NUM,
            "tau": _NUM, "seed": _INT},
    "policy": {"bin_lengths": (list,)},
    "trainer": {"eps_low": _NUM, "eps_high": _NUM, "learning_rate": _NUM,
                "batch_size": _INT, "steps": _INT, "kl_coeff": _NUM, "seed": _INT,
                "eps_std": _NUM, "intra_mode": (str,), "checkpoint_every": _INT,
                "workers": _INT},
    "eval": {"n_eval": _INT, "seed": _INT},
}
_TRAINER_KEYS = tuple(_SCHEMA["trainer"])
_LIST_ITEM = {"schedule.budgets", "env.required_lengths", "policy.bin_lengths"}


def _check_section(name: str, data: Any) -> dict:
    if not isinstance(data, dict):
        raise ConfigError("section must be a JSON object", name)
    schema = _SCHEMA[name]
    for key, value in data.items():
        path = f"{name}.{key}"
        if key not in schema:
            raise ConfigError("unknown key", path)
        types = schema[key]
        if isinstance(value, bool) or not isinstance(value, types):
            raise ConfigError(f"expected {'/'.join(t.__name__ for t in types)}, got "
                              f"{type(value).__name__}", path)
        if path in _LIST_ITEM and not all(isinstance(v, int) and not isinstance(v, bool)
                                          for v in value):
            raise ConfigError("expected a list of integers", path)
    return data


def parse_config(doc: Any) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    for key in doc:
        if key not in _SCHEMA and key != "output_dir":
            raise ConfigError("unknown key", key)
    sections = {name: _check_section(name, doc.get(name, {})) for name in _SCHEMA}
    output_dir = doc.get("output_dir", RunConfig.output_dir)
    if not isinstance(output_dir, str):
        raise ConfigError("expected a string", "output_dir")

    reward = RewardConfig(**sections["reward"])
    schedule = BudgetSchedule(**sections["schedule"])
    env = EnvConfig(**sections["env"])
    bins = tuple(sections["policy"].get("bin_lengths", DEFAULT_BINS))
    if len(bins) < 2 or any(b <= a for a, b in zip(bins, bins[1:])) or bins[0] < 1:
        raise ConfigError(f"need >= 2 positive strictly ascending bins, got {list(bins)}",
                          "policy.bin_lengths")
    trainer = TrainerConfig(schedule=schedule, reward=reward, **sections["trainer"])
    return RunConfig(reward, schedule, env, bins, trainer, EvalConfig(**sections["eval"]),
                     output_dir)


def default_config_path() -> Path:
    return Path(str(resources.files("hbpo") / "configs" / "default.json"))


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load and validate a config file (the bundled default when ``path`` is None).

    Raises ``ConfigError`` for missing files, bad JSON and invalid values.
    """
    path = default_config_path() if path is None else Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_config(doc)
