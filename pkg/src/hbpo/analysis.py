"""Evaluation and reasoning-pattern metrics."""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from hbpo import rng as rngmod
from hbpo.env import EnvConfig, make_dataset, sample_outcomes
from hbpo.errors import ConfigError, HBPOError
from hbpo.policy import MINIMAL_FEATURE, NATURAL_FEATURE, Context, PolicyParams, sample_many

NATURAL = "natural"
MINIMAL = "minimal"

DEFAULT_KEYWORDS = ("wait", "alternatively", "but", "remember", "check", "verify")
THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"

CURVE_COLUMNS = ("step", "mean_length", "std_length", "accuracy", "mean_reward")

Setting = Union[str, int]


class LogFormatError(HBPOError, ValueError):
    def __init__(self, line_no: int, message: str) -> None:
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass
class EvalReport:
    setting: str
    per_tier_accuracy: dict[str, float]
    per_tier_mean_length: dict[str, float]
    accuracy: float
    mean_tokens: float
    adaptation_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def _feature(setting: Setting, l_max: int) -> tuple[str, float]:
    if setting == NATURAL:
        return NATURAL, NATURAL_FEATURE
    if setting == MINIMAL:
        return MINIMAL, MINIMAL_FEATURE
    if isinstance(setting, (int, np.integer)) and 0 < setting <= l_max:
        return f"budget_{int(setting)}", int(setting) / l_max
    raise ConfigError(f"unknown evaluation setting {setting!r}", "eval.setting")


def evaluate(params: PolicyParams, env: EnvConfig, setting: Setting = NATURAL,
             n_eval: int = 3000, seed: int = 0, l_max: int = 4096) -> EvalReport:
    """Sample one response per problem on a fresh seeded evaluation set.

    ``setting`` is ``"natural"``, ``"minimal"`` or an integer budget.  The
    problem set and the uniforms behind every draw depend only on ``seed``
    and ``n_eval``, so two policies evaluated with the same seed face the
    same problems and the same random numbers.
    """
    if n_eval < 1:
        raise ConfigError(f"must be >= 1, got {n_eval}", "eval.n_eval")
    name, g = _feature(setting, l_max)
    problems = make_dataset(n_eval, env, rngmod.generator(seed, env.seed, rngmod.EVAL_DATASET))
    tiers = np.array([p.tier for p in problems])
    n_gen = np.zeros(n_eval)
    correct = np.zeros(n_eval, dtype=bool)
    for t in range(1, env.tiers + 1):
        idx = np.flatnonzero(tiers == t)
        if idx.size == 0:
            continue
        a, _ = sample_many(Context(t, g), params,
                           rngmod.generator(seed, env.seed, rngmod.EVAL_ROLLOUT, t), idx.size)
        lengths = np.asarray(params.bin_lengths, dtype=float)[a]
        n_gen[idx] = lengths
        correct[idx] = sample_outcomes(lengths, problems[idx[0]], env,
                                       rngmod.generator(seed, env.seed, rngmod.EVAL_OUTCOME, t))
    acc, length = {}, {}
    for t in range(1, env.tiers + 1):
        mask = tiers == t
        if mask.any():
            acc[str(t)] = float(correct[mask].mean())
            length[str(t)] = float(n_gen[mask].mean())
    tier_keys = sorted(length, key=int)
    ratio = length[tier_keys[-1]] / length[tier_keys[0]]
    return EvalReport(name, acc, length, float(correct.mean()), float(n_gen.mean()), ratio)


def max_length_policy(env: EnvConfig, bin_lengths: Sequence[int], margin: float = 50.0
                      ) -> PolicyParams:
    """Baseline that (numerically) always answers with the longest bin."""
    params = PolicyParams.zeros(env.tiers, bin_lengths)
    params.theta_base[:, -1] = margin
    return params


@dataclass
class TranscriptStats:
    thinking_proportion: float
    keyword_counts: dict[str, int]
    keywords_in_solution: int
    thinking_tokens: int = 0
    total_tokens: int = 0
    unclosed_think: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _keyword_pattern(keyword: str) -> re.Pattern:
    return re.compile(r"(?<!\w)" + re.escape(keyword) + r"(?!\w)", re.IGNORECASE)


def _strip_tags(text: str) -> str:
    return text.replace(THINK_OPEN, " ").replace(THINK_CLOSE, " ")


def split_thinking(text: str) -> tuple[str, str, bool]:
    """Return ``(thinking, solution, unclosed)`` for the first tag pair.

    Tags themselves belong to neither part.  An opening tag without a
    closing tag makes the rest of the text thinking.
    """
    start = text.find(THINK_OPEN)
    if start < 0:
        return "", _strip_tags(text), False
    body_start = start + len(THINK_OPEN)
    end = text.find(THINK_CLOSE, body_start)
    if end < 0:
        return _strip_tags(text[body_start:]), _strip_tags(text[:start]), True
    thinking = text[body_start:end]
    solution = text[:start] + " " + text[end + len(THINK_CLOSE):]
    return _strip_tags(thinking), _strip_tags(solution), False


def analyze_transcript(text: str, keywords: Sequence[str] = DEFAULT_KEYWORDS) -> TranscriptStats:
    thinking, solution, unclosed = split_thinking(text)
    n_think = len(thinking.split())
    total = n_think + len(solution.split())
    counts: dict[str, int] = {}
    in_solution = 0
    for kw in keywords:
        pattern = _keyword_pattern(kw)
        sol = len(pattern.findall(solution))
        counts[kw] = len(pattern.findall(thinking)) + sol
        in_solution += sol
    return TranscriptStats(
        thinking_proportion=n_think / total if total else 0.0,
        keyword_counts=counts,
        keywords_in_solution=in_solution,
        thinking_tokens=n_think,
        total_tokens=total,
        unclosed_think=unclosed,
    )


def read_transcripts(path: str | Path) -> list[dict]:
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
                raise LogFormatError(line_no, "expected an object with a string 'text' field")
            records.append({"id": obj.get("id", line_no), "text": obj["text"]})
    return records


def aggregate_stats(stats: Sequence[TranscriptStats], keywords: Sequence[str]) -> dict:
    """Per-transcript means over all transcripts."""
    n = len(stats)
    if n == 0:
        return {"count": 0, "thinking_proportion": None, "keywords_in_solution": None,
                "keyword_means": {kw: None for kw in keywords}}
    return {
        "count": n,
        "thinking_proportion": sum(s.thinking_proportion for s in stats) / n,
        "keywords_in_solution": sum(s.keywords_in_solution for s in stats) / n,
        "keyword_means": {kw: sum(s.keyword_counts[kw] for s in stats) / n for kw in keywords},
    }


def stats_table(ids: Sequence, stats: Sequence[TranscriptStats], keywords: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "thinking_proportion", *keywords, "keywords_in_solution",
                     "unclosed_think"])
    for tid, s in zip(ids, stats):
        writer.writerow([tid, s.thinking_proportion, *(s.keyword_counts[kw] for kw in keywords),
                         s.keywords_in_solution, int(s.unclosed_think)])
    return buf.getvalue()


def read_step_reports(path: str | Path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise LogFormatError(line_no, "expected a JSON object")
            if obj.get("type", "step") != "step":
                continue
            missing = [c for c in CURVE_COLUMNS if c not in obj]
            if missing:
                raise LogFormatError(line_no, f"missing field(s) {missing}")
            rows.append(obj)
    return sorted(rows, key=lambda r: r["step"])


def export_training_curves(run_log: str | Path, out: str | Path | None = None) -> str:
    """Flatten the step lines of a run log into a CSV table.

    Returns the CSV text and also writes it to ``out`` when given.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for row in read_step_reports(run_log):
        writer.writerow([row[c] for c in CURVE_COLUMNS])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text)
    return text
