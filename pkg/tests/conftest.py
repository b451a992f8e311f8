import json
import time

import pytest

from hbpo.analysis import MINIMAL, NATURAL, evaluate, max_length_policy
from hbpo.config import load_config
from hbpo.hierarchy import make_schedule
from hbpo.policy import PolicyParams
from hbpo.trainer import train

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"AC{number}: {'PASS' if ok else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[2:s.index(":")])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_config():
    return load_config()


def _train_and_eval(cfg):
    """Returns (params, reports, evals, seconds) where seconds covers training and eval."""
    start = time.perf_counter()
    params, reports = train(PolicyParams.zeros(cfg.env.tiers, cfg.bin_lengths), cfg.env,
                            cfg.trainer)
    ev = cfg.eval
    evals = {s: evaluate(params, cfg.env, s, ev.n_eval, ev.seed, cfg.reward.l_max)
             for s in (NATURAL, MINIMAL)}
    return params, reports, evals, time.perf_counter() - start


@pytest.fixture(scope="session")
def trained(default_config):
    """Default 4-budget run (T=500, seed 0), shared by the slow tests."""
    return _train_and_eval(default_config)


@pytest.fixture(scope="session")
def max_length_eval(default_config):
    cfg = default_config
    return evaluate(max_length_policy(cfg.env, cfg.bin_lengths), cfg.env, NATURAL,
                    cfg.eval.n_eval, cfg.eval.seed, cfg.reward.l_max)


@pytest.fixture(scope="session")
def sweep_runs(default_config, trained):
    cfg = default_config
    runs = {4: trained}
    for k in (1, 2):
        schedule = make_schedule(k, 1536, cfg.schedule.rollouts_per_query, cfg.reward.l_max)
        runs[k] = _train_and_eval(cfg.with_schedule(schedule))
    return runs


@pytest.fixture
def write_config(tmp_path, default_config):
    """Write a config derived from the default with section overrides."""
    def write(name="config.json", **sections):
        doc = default_config.to_dict()
        for section, values in sections.items():
            if isinstance(values, dict):
                doc[section].update(values)
            else:
                doc[section] = values
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return path
    return write
