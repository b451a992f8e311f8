"""Acceptance criteria AC1-AC9.

Each test records one PASS/FAIL line through ``report_criterion``; the lines
are printed in the terminal summary.  Run alone with
``pytest tests/test_acceptance.py -v``.
"""
import math
import time

import numpy as np
import pytest

from hbpo.advantage import RolloutRecord, SubgroupBatch, combined_advantage
from hbpo.analysis import MINIMAL, NATURAL, DEFAULT_KEYWORDS, analyze_transcript
from hbpo.cli import main
from hbpo.hierarchy import BudgetSchedule
from hbpo.policy import PolicyParams, grad_log_prob
from hbpo.reward import Branch, RewardConfig, budget_preference, f1, f2, reward
from hbpo.trainer import clipped_loss_term, surrogate_grad

from test_analysis import TRANSCRIPT_FIXTURES
from test_policy import fd_grad_log_prob, max_rel_err, random_context, random_params
from test_trainer import fd_batch_grad, random_frozen_batch

pytestmark = pytest.mark.acceptance

BUDGETS = (512, 1024, 2048, 2560)


def test_ac1_reward_suite(report_criterion):
    start = time.perf_counter()
    cfg = RewardConfig()
    bad = []

    def cos_term(x):
        return math.cos(math.pi * x / (2 * cfg.l_max))

    for n in range(0, cfg.l_max + 2):
        for b in BUDGETS:
            for correct in (True, False):
                if not correct or n > cfg.l_max:
                    want, branch = 0.0, Branch.ZERO
                elif n > b:
                    want = cos_term(n) - cfg.alpha * (n - b)
                    branch = Branch.OVER_BUDGET_CORRECT
                else:
                    want, branch = cos_term(b), Branch.WITHIN_BUDGET_CORRECT
                got = reward(n, correct, b, cfg)
                if got.branch is not branch or abs(got.value - want) > 1e-12:
                    bad.append(("branch", n, b, correct))
        if n <= cfg.l_max:
            ranked = [b for b, _ in budget_preference(n, BUDGETS, cfg)]
            if n < min(BUDGETS) and ranked[0] != min(BUDGETS):
                bad.append(("short", n))
            if n > max(BUDGETS) and ranked[0] != max(BUDGETS):
                bad.append(("long", n))
    for b in range(1, cfg.l_max + 1):
        if f1(b, b, cfg) != f2(b, cfg):
            bad.append(("continuity", b))
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 5
    report_criterion(1, ok, f"{len(bad)} violations, {elapsed:.2f}s")
    assert not bad, bad[:10]
    assert elapsed < 5


def loop_oracle(rewards, subgroup, budgets, cfg):
    groups = {}
    for r, g in zip(rewards, subgroup):
        groups.setdefault(g, []).append(r)
    intra = {g: sum(v) / len(v) - cfg.beta * math.cos(math.pi * budgets[g] / (2 * cfg.l_max))
             for g, v in groups.items()}
    mean = sum(rewards) / len(rewards)
    std = math.sqrt(sum((r - mean) ** 2 for r in rewards) / len(rewards))
    return [intra[g] + (0.0 if std < 1e-8 else (r - mean) / std)
            for r, g in zip(rewards, subgroup)]


def test_ac2_advantage_suite(report_criterion):
    cfg = RewardConfig()
    rng = np.random.default_rng(2024)
    worst_mean = worst_std = worst_oracle = 0.0
    failures = 0
    for _ in range(1000):
        k = int(rng.integers(1, 5))
        m = int(rng.integers(1, 9))
        if k * m < 2:
            m = 2
        budgets = tuple(sorted(rng.choice(np.arange(1, 4097), k, replace=False).tolist()))
        schedule = BudgetSchedule(budgets, k * m)
        rewards = rng.normal(0.5, 0.4, k * m)
        rewards[rng.random(k * m) < 0.3] = 0.0
        records = [RolloutRecord(j // m, budgets[j // m], 100, r != 0, float(r))
                   for j, r in enumerate(rewards)]
        adv = combined_advantage(SubgroupBatch("q", records, schedule), cfg)
        if adv.std_reward >= 1e-8:
            worst_mean = max(worst_mean, abs(adv.inter.mean()))
            worst_std = max(worst_std, abs(adv.inter.std() - 1))
        for i in range(k):
            sel = adv.subgroup == i
            # Subtracting inter back out is only exact up to rounding.
            if np.max(np.abs(adv.combined[sel] - adv.inter[sel] - adv.intra[i])) > 1e-12:
                failures += 1
        if not np.array_equal(adv.combined, adv.intra[adv.subgroup] + adv.inter):
            failures += 1
        if k * m <= 8:
            oracle = loop_oracle(rewards.tolist(), adv.subgroup.tolist(), budgets, cfg)
            worst_oracle = max(worst_oracle, float(np.max(np.abs(adv.combined - oracle))))
    ok = worst_mean < 1e-9 and worst_std < 1e-9 and worst_oracle < 1e-12 and failures == 0
    report_criterion(2, ok, f"max|mean|={worst_mean:.1e} max|std-1|={worst_std:.1e} "
                            f"oracle={worst_oracle:.1e} structural failures={failures}")
    assert ok


def test_ac3_gradient_checks(report_criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_lp = 0.0
    for _ in range(100):
        params = random_params(rng)
        ctx = random_context(rng)
        a = int(rng.integers(0, params.bins))
        g = grad_log_prob(ctx, a, params)
        fb, fg = fd_grad_log_prob(ctx, a, params)
        worst_lp = max(worst_lp, max_rel_err(g.theta_base, fb), max_rel_err(g.theta_budget, fg))
    worst_batch = 0.0
    for _ in range(100):
        params = PolicyParams(rng.normal(0, 1, (3, 8)), rng.normal(0, 1, 8))
        batch = random_frozen_batch(rng, params)
        grad, _ = surrogate_grad(params, batch, 0.2, 0.28)
        fb, fg = fd_batch_grad(params, batch)
        worst_batch = max(worst_batch, max_rel_err(grad.theta_base, fb),
                          max_rel_err(grad.theta_budget, fg))
    elapsed = time.perf_counter() - start
    ok = worst_lp < 1e-5 and worst_batch < 1e-4 and elapsed < 10
    report_criterion(3, ok, f"log-prob rel err {worst_lp:.1e}, surrogate rel err "
                            f"{worst_batch:.1e}, {elapsed:.2f}s")
    assert ok


def test_ac4_clip_behavior(report_criterion):
    cases = [clipped_loss_term(1.0, 0.7) == -0.7,
             clipped_loss_term(1.0, -1.3) == 1.3,
             clipped_loss_term(1.5, 2.0, 0.2, 0.28) == -2.56,
             clipped_loss_term(0.5, -1.0, 0.2, 0.28) == 0.8]
    rng = np.random.default_rng(4)
    violations = 0
    for r, a in zip(np.exp(rng.uniform(-3, 3, 10_000)), rng.normal(0, 5, 10_000)):
        loss = clipped_loss_term(r, a, 0.2, 0.28)
        clipped = min(max(r, 0.8), 1.28)
        if loss != -min(r * a, clipped * a):
            violations += 1
        if loss < -max(r * a, clipped * a):
            violations += 1
    ok = all(cases) and violations == 0
    report_criterion(4, ok, f"hand cases {sum(cases)}/4, property violations {violations}/10000")
    assert ok


@pytest.mark.slow
def test_ac5_emergent_adaptation(trained, max_length_eval, report_criterion):
    _, _, evals, elapsed = trained
    nat = evals[NATURAL]
    lengths = [nat.per_tier_mean_length[str(t)] for t in (1, 2, 3)]
    monotone = all(a <= b for a, b in zip(lengths, lengths[1:]))
    acc_ok = nat.accuracy >= 0.95 * max_length_eval.accuracy
    ok = monotone and nat.adaptation_ratio >= 1.5 and acc_ok and elapsed < 60
    report_criterion(5, ok, f"tier lengths {[round(x) for x in lengths]}, ratio "
                            f"{nat.adaptation_ratio:.2f}, accuracy {nat.accuracy:.3f} vs "
                            f"max-length {max_length_eval.accuracy:.3f}, {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_ac6_hierarchy_ablation(sweep_runs, report_criterion):
    ratios = {k: run[2][NATURAL].adaptation_ratio for k, run in sweep_runs.items()}
    elapsed = sum(run[3] for run in sweep_runs.values())
    ordering = ratios[4] > ratios[1]
    collapse = 0.8 <= ratios[1] <= 1.25
    ok = ordering and collapse and elapsed < 180
    report_criterion(6, ok, f"ratios k=1 {ratios[1]:.2f}, k=2 {ratios[2]:.2f}, "
                            f"k=4 {ratios[4]:.2f}; k4>k1 {ordering}; k1 in [0.8,1.25] "
                            f"{collapse}; {elapsed:.1f}s")
    assert ordering, "k=4 adaptation ratio does not exceed k=1"
    assert elapsed < 180
    assert collapse, f"k=1 adaptation ratio {ratios[1]:.3f} outside [0.8, 1.25]"


@pytest.mark.slow
def test_ac7_efficiency_prompt(trained, report_criterion):
    nat, mini = trained[2][NATURAL], trained[2][MINIMAL]
    drop = nat.accuracy - mini.accuracy
    ok = mini.mean_tokens < nat.mean_tokens and drop <= 0.15
    report_criterion(7, ok, f"tokens natural {nat.mean_tokens:.1f} minimal "
                            f"{mini.mean_tokens:.1f}; accuracy drop {100 * drop:.1f} pp")
    assert ok


@pytest.mark.slow
def test_ac8_determinism(tmp_path, report_criterion):
    runs = {}
    for name, workers in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / name
        code = main(["train", "--output-dir", str(out), "--workers", workers])
        runs[name] = (code, (out / "run.jsonl").read_bytes())
    codes_ok = all(code == 0 for code, _ in runs.values())
    same_seed = runs["a"][1] == runs["b"][1]
    same_workers = runs["a"][1] == runs["c"][1]
    ok = codes_ok and same_seed and same_workers
    report_criterion(8, ok, f"rerun identical {same_seed}, workers 1 vs 4 identical "
                            f"{same_workers}, {len(runs['a'][1])} bytes")
    assert ok


def test_ac9_transcript_analyzer(report_criterion):
    mismatches = 0
    for text, prop, counts, in_sol, unclosed in TRANSCRIPT_FIXTURES:
        s = analyze_transcript(text)
        if (abs(s.thinking_proportion - prop) > 1e-15
                or s.keyword_counts != {kw: counts.get(kw, 0) for kw in DEFAULT_KEYWORDS}
                or s.keywords_in_solution != in_sol or s.unclosed_think is not unclosed):
            mismatches += 1
    rng = np.random.default_rng(9)
    crashes = violations = 0
    for _ in range(10_000):
        raw = rng.integers(0, 256, int(rng.integers(0, 200)), dtype=np.uint8).tobytes()
        text = raw.decode("latin-1")
        if rng.random() < 0.5:
            text = text.replace(text[:1], "<think>", 1) + rng.choice(["</think>", ""])
        try:
            s = analyze_transcript(text)
        except Exception:
            crashes += 1
            continue
        if not (0.0 <= s.thinking_proportion <= 1.0
                and all(v >= 0 for v in s.keyword_counts.values())
                and 0 <= s.keywords_in_solution <= sum(s.keyword_counts.values())):
            violations += 1
    ok = mismatches == 0 and crashes == 0 and violations == 0
    report_criterion(9, ok, f"{len(TRANSCRIPT_FIXTURES)} fixtures, {mismatches} mismatches; "
                            f"fuzz 10000 strings, {crashes} crashes, {violations} violations")
    assert ok
