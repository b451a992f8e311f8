"""Command line entry point.

    hbpo train         [--config PATH] [--output-dir DIR] [--workers N]
    hbpo eval          [--config PATH] --checkpoint FILE [--setting S]
    hbpo sweep         [--config PATH] [--k 1,2,4] [--output-dir DIR]
    hbpo reward-curves [--config PATH] --out FILE
    hbpo analyze       TRANSCRIPTS --out DIR [--keywords w1,w2,...]
    hbpo export-curves RUN_LOG --out FILE

Exit codes: 0 success, 1 runtime failure, 2 invalid config or arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from hbpo.analysis import (DEFAULT_KEYWORDS, MINIMAL, NATURAL, aggregate_stats, analyze_transcript,
                           evaluate, export_training_curves, max_length_policy, read_transcripts,
                           stats_table)
from hbpo.config import RunConfig, load_config
from hbpo.env import dump_dataset, make_dataset
from hbpo.errors import ConfigError, HBPOError
from hbpo.hierarchy import make_schedule
from hbpo.policy import PolicyParams
from hbpo import rng as rngmod
from hbpo.reward import pairwise_thresholds, reward_curves
from hbpo.trainer import train

log = logging.getLogger("hbpo")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
SWEEP_MEAN_BUDGET = 1536


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_training(cfg: RunConfig, out: Path) -> dict:
    """Train from scratch into ``out`` and return the final evaluation summary."""
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.to_dict())
    (out / "curves").mkdir(exist_ok=True)

    params0 = PolicyParams.zeros(cfg.env.tiers, cfg.bin_lengths)
    every = max(1, cfg.trainer.steps // 10)

    def progress(report) -> None:
        if (report.step + 1) % every == 0:
            log.info("step %d  reward %.4f  acc %.3f  len %.0f", report.step + 1,
                     report.mean_reward, report.accuracy, report.mean_length)

    params, _ = train(params0, cfg.env, cfg.trainer, run_log=out / "run.jsonl",
                      checkpoint_dir=out / "checkpoints", on_step=progress)
    export_training_curves(out / "run.jsonl", out / "curves" / "training_curves.csv")

    ev = cfg.eval
    l_max = cfg.reward.l_max
    summary = {
        NATURAL: evaluate(params, cfg.env, NATURAL, ev.n_eval, ev.seed, l_max).to_dict(),
        MINIMAL: evaluate(params, cfg.env, MINIMAL, ev.n_eval, ev.seed, l_max).to_dict(),
        "max_length_baseline": evaluate(max_length_policy(cfg.env, cfg.bin_lengths), cfg.env,
                                        NATURAL, ev.n_eval, ev.seed, l_max).to_dict(),
        "budgets": list(cfg.schedule.budgets),
    }
    _write_json(out / "final_eval.json", summary)
    dump_dataset(make_dataset(ev.n_eval, cfg.env,
                              rngmod.generator(ev.seed, cfg.env.seed, rngmod.EVAL_DATASET)),
                 out / "eval_dataset.jsonl")
    return summary


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.workers is not None:
        cfg = replace(cfg, trainer=replace(cfg.trainer, workers=args.workers))
    out = Path(args.output_dir or cfg.output_dir)
    summary = run_training(cfg, out)
    nat = summary[NATURAL]
    print(f"natural: accuracy {nat['accuracy']:.3f}  mean tokens {nat['mean_tokens']:.1f}  "
          f"adaptation {nat['adaptation_ratio']:.2f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    params = PolicyParams.load(args.checkpoint)
    setting = int(args.setting) if args.setting.isdigit() else args.setting
    report = evaluate(params, cfg.env, setting, args.n_eval or cfg.eval.n_eval, cfg.eval.seed,
                      cfg.reward.l_max)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _parse_k_list(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}", "sweep.k") from exc
    if not ks:
        raise ConfigError("empty k list", "sweep.k")
    return ks


SWEEP_COLUMNS = ("k", "budgets", "accuracy", "mean_tokens", "adaptation_ratio",
                 "minimal_accuracy", "minimal_mean_tokens")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    n = cfg.schedule.rollouts_per_query
    # Validate every schedule before any training starts.
    schedules = {k: make_schedule(k, SWEEP_MEAN_BUDGET, n, cfg.reward.l_max)
                 for k in _parse_k_list(args.k)}
    root = Path(args.output_dir or cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, schedule in schedules.items():
        log.info("sweep: k=%d budgets=%s", k, list(schedule.budgets))
        summary = run_training(cfg.with_schedule(schedule), root / f"k{k}")
        nat, mini = summary[NATURAL], summary[MINIMAL]
        rows.append([k, " ".join(map(str, schedule.budgets)), nat["accuracy"],
                     nat["mean_tokens"], nat["adaptation_ratio"], mini["accuracy"],
                     mini["mean_tokens"]])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    writer.writerows(rows)
    (root / "sweep.csv").write_text(buf.getvalue())

    print(f"{'k':>3}  {'budgets':<24} {'acc':>6} {'tokens':>8} {'adapt':>6}")
    for k, budgets, acc, tokens, ratio, *_ in rows:
        print(f"{k:>3}  {budgets:<24} {acc:>6.3f} {tokens:>8.1f} {ratio:>6.2f}")
    return EXIT_OK


def thresholds_path(out: Path) -> Path:
    return out.with_name(out.stem + "_thresholds" + (out.suffix or ".csv"))


def cmd_reward_curves(args) -> int:
    cfg = load_config(args.config)
    budgets = cfg.schedule.budgets
    out = Path(args.out)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n_gen", *(f"b{b}" for b in budgets)])
    writer.writerows(reward_curves(budgets, cfg.reward))
    curves = buf.getvalue()

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["b_low", "b_high", "threshold"])
    for lo, hi, n in pairwise_thresholds(budgets, cfg.reward):
        writer.writerow([lo, hi, "" if n is None else n])

    out.write_text(curves)
    thresholds_path(out).write_text(buf.getvalue())
    return EXIT_OK


def cmd_analyze(args) -> int:
    keywords = tuple(k.strip() for k in args.keywords.split(",") if k.strip()) \
        if args.keywords else DEFAULT_KEYWORDS
    records = read_transcripts(args.transcripts)
    stats = [analyze_transcript(r["text"], keywords) for r in records]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "stats.json", {
        "source": str(args.transcripts),
        "keywords": list(keywords),
        "transcripts": [{"id": r["id"], **s.to_dict()} for r, s in zip(records, stats)],
        "aggregate": aggregate_stats(stats, keywords),
    })
    (out / "aggregate.csv").write_text(stats_table([r["id"] for r in records], stats, keywords))
    return EXIT_OK


def cmd_export_curves(args) -> int:
    export_training_curves(args.run_log, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hbpo", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="run config JSON (default: bundled config)")
        return p

    p = with_config(sub.add_parser("train", help="train a policy"))
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_train)

    p = with_config(sub.add_parser("eval", help="evaluate a checkpoint"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--setting", default=NATURAL, help="natural, minimal, or a budget in tokens")
    p.add_argument("--n-eval", type=int)
    p.set_defaults(func=cmd_eval)

    p = with_config(sub.add_parser("sweep", help="budget-granularity ablation"))
    p.add_argument("--k", default="1,2,4", help="comma-separated subgroup counts")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_sweep)

    p = with_config(sub.add_parser("reward-curves", help="export reward curves and thresholds"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reward_curves)

    p = sub.add_parser("analyze", help="keyword / thinking-proportion stats for transcripts")
    p.add_argument("transcripts")
    p.add_argument("--out", required=True)
    p.add_argument("--keywords", help="comma-separated keyword list")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("export-curves", help="run log to training-curve CSV")
    p.add_argument("run_log")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_curves)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HBPOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
