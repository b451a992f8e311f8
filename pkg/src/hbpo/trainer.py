"""Hierarchical budget policy optimisation loop.

Each step samples a batch of problems, generates ``n`` rollouts per problem
split across the budget subgroups, scores them with the piecewise reward,
computes intra + inter advantages per problem and takes one plain gradient
step on the clipped surrogate loss averaged over every rollout in the step.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from hbpo import rng as rngmod
from hbpo.advantage import EPS_STD, INTRA_MODES, AdvantageSet, compute_advantages
from hbpo.env import EnvConfig, Problem, make_dataset, sample_outcomes
from hbpo.errors import ConfigError, HBPOError, NumericError, TrainingError
from hbpo.hierarchy import BudgetSchedule
from hbpo.policy import Context, PolicyParams, sample_many
from hbpo.reward import RewardConfig, f2, reward_array


@dataclass(frozen=True)
class TrainerConfig:
    eps_low: float = 0.2
    eps_high: float = 0.28
    learning_rate: float = 0.5
    batch_size: int = 32
    steps: int = 500
    schedule: BudgetSchedule = field(default_factory=BudgetSchedule)
    reward: RewardConfig = field(default_factory=RewardConfig)
    kl_coeff: float = 0.0
    seed: int = 0
    eps_std: float = EPS_STD
    intra_mode: str = "subgroup"
    checkpoint_every: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        checks = [
            ("eps_low", 0 < self.eps_low < 1, "must be in (0, 1)"),
            ("eps_high", 0 < self.eps_high < 1, "must be in (0, 1)"),
            ("learning_rate", self.learning_rate >= 0 and math.isfinite(self.learning_rate),
             "must be finite and >= 0"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("steps", self.steps >= 1, "must be >= 1"),
            ("kl_coeff", self.kl_coeff == 0, "KL regularisation is not supported; must be 0"),
            ("seed", self.seed >= 0, "must be >= 0"),
            ("eps_std", self.eps_std >= 0, "must be >= 0"),
            ("intra_mode", self.intra_mode in INTRA_MODES, f"must be one of {INTRA_MODES}"),
            ("checkpoint_every", self.checkpoint_every >= 0, "must be >= 0"),
            ("workers", self.workers >= 1, "must be >= 1"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{msg}, got {getattr(self, name)!r}", f"trainer.{name}")
        self.schedule.validate_against(self.reward.l_max)


@dataclass
class StepReport:
    step: int
    mean_reward: float
    mean_length: float
    std_length: float
    per_tier_mean_length: dict[str, float | None]
    loss: float
    accuracy: float

    def to_json(self) -> str:
        return json.dumps({"type": "step", **asdict(self)}, sort_keys=True)


def clipped_loss_term(ratio: float, advantage: float, eps_low: float = 0.2,
                      eps_high: float = 0.28) -> float:
    """Per-sample negative clipped surrogate ``-min(rA, clip(r) A)``."""
    if not (math.isfinite(ratio) and math.isfinite(advantage)):
        raise NumericError(f"non-finite input: ratio={ratio}, advantage={advantage}")
    if ratio <= 0:
        raise NumericError(f"ratio must be > 0, got {ratio}")
    clipped = min(max(ratio, 1.0 - eps_low), 1.0 + eps_high)
    return -min(ratio * advantage, clipped * advantage)


def _loss_and_ratio_grad(ratio: np.ndarray, adv: np.ndarray, eps_low: float, eps_high: float
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised loss terms and their derivative with respect to the ratio."""
    clipped = np.clip(ratio, 1.0 - eps_low, 1.0 + eps_high)
    unclipped_obj = ratio * adv
    clipped_obj = clipped * adv
    use_unclipped = unclipped_obj <= clipped_obj
    loss = -np.where(use_unclipped, unclipped_obj, clipped_obj)
    return loss, np.where(use_unclipped, -adv, 0.0)


@dataclass
class FrozenBatch:
    """Flat per-rollout arrays that fully determine the surrogate loss."""

    tiers: np.ndarray
    features: np.ndarray
    actions: np.ndarray
    old_logprobs: np.ndarray
    advantages: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def concat(cls, parts: Sequence[FrozenBatch]) -> FrozenBatch:
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("tiers", "features", "actions", "old_logprobs", "advantages")))


def _batch_log_probs(params: PolicyParams, batch: FrozenBatch) -> np.ndarray:
    z = params.theta_base[batch.tiers - 1] + batch.features[:, None] * params.theta_budget
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def surrogate_loss(params: PolicyParams, batch: FrozenBatch, eps_low: float = 0.2,
                   eps_high: float = 0.28) -> float:
    lp = _batch_log_probs(params, batch)
    chosen = lp[np.arange(len(batch)), batch.actions]
    ratio = np.exp(chosen - batch.old_logprobs)
    loss, _ = _loss_and_ratio_grad(ratio, batch.advantages, eps_low, eps_high)
    return float(loss.mean())


def surrogate_grad(params: PolicyParams, batch: FrozenBatch, eps_low: float = 0.2,
                   eps_high: float = 0.28) -> tuple[PolicyParams, float]:
    """Mean clipped surrogate loss over the batch and its analytic gradient."""
    lp = _batch_log_probs(params, batch)
    idx = np.arange(len(batch))
    ratio = np.exp(lp[idx, batch.actions] - batch.old_logprobs)
    loss, d_ratio = _loss_and_ratio_grad(ratio, batch.advantages, eps_low, eps_high)
    # d loss / d log pi(a) = d loss / d ratio * ratio
    coef = d_ratio * ratio / len(batch)
    score = -np.exp(lp)
    score[idx, batch.actions] += 1.0
    weighted = coef[:, None] * score
    g_base = np.zeros_like(params.theta_base)
    np.add.at(g_base, batch.tiers - 1, weighted)
    g_budget = (weighted * batch.features[:, None]).sum(axis=0)
    return PolicyParams(g_base, g_budget, params.bin_lengths), float(loss.mean())


@dataclass
class QueryRollout:
    """Everything generated for one problem in one step."""

    problem: Problem
    subgroup: np.ndarray
    budgets: np.ndarray
    actions: np.ndarray
    n_gen: np.ndarray
    correct: np.ndarray
    rewards: np.ndarray
    old_logprobs: np.ndarray
    advantages: AdvantageSet

    def frozen(self, l_max: int) -> FrozenBatch:
        n = len(self.actions)
        return FrozenBatch(np.full(n, self.problem.tier), self.budgets / l_max, self.actions,
                           self.old_logprobs, self.advantages.combined)


def rollout_query(params: PolicyParams, problem: Problem, env: EnvConfig, cfg: TrainerConfig,
                  step: int, query: int) -> QueryRollout:
    """Sample and score the ``n`` hierarchical rollouts for one problem.

    Randomness is keyed by ``(seed, step, query)`` only, so queries can be
    processed in any order.
    """
    schedule, rcfg = cfg.schedule, cfg.reward
    policy_gen = rngmod.generator(cfg.seed, env.seed, rngmod.ROLLOUT, step, query)
    outcome_gen = rngmod.generator(cfg.seed, env.seed, rngmod.OUTCOME, step, query)
    m = schedule.subgroup_size
    actions, logps = [], []
    for b in schedule.budgets:
        a, lp = sample_many(Context.for_budget(problem.tier, b, rcfg.l_max), params, policy_gen, m)
        actions.append(a)
        logps.append(lp)
    actions = np.concatenate(actions)
    subgroup = np.repeat(np.arange(schedule.k), m)
    budgets = np.asarray(schedule.budgets, dtype=float)[subgroup]
    n_gen = np.asarray(params.bin_lengths)[actions]
    correct = sample_outcomes(n_gen, problem, env, outcome_gen)
    rewards = reward_array(n_gen, correct, budgets, rcfg)
    baselines = [f2(b, rcfg) for b in schedule.budgets]
    adv = compute_advantages(rewards, subgroup, baselines, cfg.eps_std, cfg.intra_mode)
    return QueryRollout(problem, subgroup, budgets, actions, n_gen, correct, rewards,
                        np.concatenate(logps), adv)


def step_problems(env: EnvConfig, cfg: TrainerConfig, step: int) -> list[Problem]:
    gen = rngmod.generator(cfg.seed, env.seed, rngmod.DATASET, step)
    return make_dataset(cfg.batch_size, env, gen, start_id=step * cfg.batch_size)


def train_step(params: PolicyParams, env: EnvConfig, cfg: TrainerConfig, step: int = 0,
               executor: ThreadPoolExecutor | None = None
               ) -> tuple[PolicyParams, StepReport, list[QueryRollout]]:
    problems = step_problems(env, cfg, step)

    def run(q: int) -> QueryRollout:
        return rollout_query(params, problems[q], env, cfg, step, q)

    if executor is None:
        rollouts = [run(q) for q in range(len(problems))]
    else:
        rollouts = list(executor.map(run, range(len(problems))))

    batch = FrozenBatch.concat([r.frozen(cfg.reward.l_max) for r in rollouts])
    grad, loss = surrogate_grad(params, batch, cfg.eps_low, cfg.eps_high)
    new = PolicyParams(params.theta_base - cfg.learning_rate * grad.theta_base,
                       params.theta_budget - cfg.learning_rate * grad.theta_budget,
                       params.bin_lengths)
    if not (new.is_finite() and math.isfinite(loss)):
        raise NumericError("non-finite parameters or loss after update")
    return new, _report(step, rollouts, loss, env), rollouts


def _report(step: int, rollouts: list[QueryRollout], loss: float, env: EnvConfig) -> StepReport:
    n_gen = np.concatenate([r.n_gen for r in rollouts]).astype(float)
    tiers = np.concatenate([np.full(len(r.n_gen), r.problem.tier) for r in rollouts])
    per_tier = {}
    for t in range(1, env.tiers + 1):
        mask = tiers == t
        per_tier[str(t)] = float(n_gen[mask].mean()) if mask.any() else None
    return StepReport(
        step=step,
        mean_reward=float(np.concatenate([r.rewards for r in rollouts]).mean()),
        mean_length=float(n_gen.mean()),
        std_length=float(n_gen.std()),
        per_tier_mean_length=per_tier,
        loss=loss,
        accuracy=float(np.concatenate([r.correct for r in rollouts]).mean()),
    )


def iter_training(params: PolicyParams, env: EnvConfig, cfg: TrainerConfig
                  ) -> Iterator[tuple[PolicyParams, StepReport, list[QueryRollout]]]:
    executor = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for step in range(cfg.steps):
            try:
                params, report, rollouts = train_step(params, env, cfg, step, executor)
            except HBPOError as exc:
                raise TrainingError(step, exc) from exc
            yield params, report, rollouts
    finally:
        if executor is not None:
            executor.shutdown()


def train(params: PolicyParams, env: EnvConfig, cfg: TrainerConfig,
          run_log: str | Path | None = None, checkpoint_dir: str | Path | None = None,
          log_advantages: bool = False,
          on_step: Callable[[StepReport], None] | None = None
          ) -> tuple[PolicyParams, list[StepReport]]:
    """Run ``cfg.steps`` training steps from ``params``.

    With ``run_log`` set, one JSON line per step is appended as the step
    finishes (plus one line per query when ``log_advantages``).  With
    ``checkpoint_dir`` set, parameters are written every
    ``cfg.checkpoint_every`` steps and once at the end.
    """
    reports: list[StepReport] = []
    log = open(run_log, "w") if run_log is not None else None
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)
    try:
        for params, report, rollouts in iter_training(params, env, cfg):
            reports.append(report)
            if log is not None:
                log.write(report.to_json() + "\n")
                if log_advantages:
                    for q, r in enumerate(rollouts):
                        log.write(json.dumps({"type": "advantage", "step": report.step,
                                              "query": q, "tier": r.problem.tier,
                                              **r.advantages.to_dict()}, sort_keys=True) + "\n")
                log.flush()
            if ckpt is not None and cfg.checkpoint_every and (report.step + 1) % cfg.checkpoint_every == 0:
                params.save(ckpt / f"step_{report.step + 1:06d}.json")
            if on_step is not None:
                on_step(report)
    finally:
        if log is not None:
            log.close()
    if ckpt is not None:
        params.save(ckpt / "final.json")
    return params, reports
