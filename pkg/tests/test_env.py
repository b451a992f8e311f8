import json

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from hbpo.env import (EnvConfig, Problem, correctness_prob, correctness_probs, dump_dataset,
                      make_dataset, problem_for_tier, sample_outcome, sample_outcomes)
from hbpo.errors import ConfigError
from hbpo.rng import RngState, generator

ENV = EnvConfig()


class TestCorrectnessProb:
    def test_midpoint_at_required_length(self):
        p = problem_for_tier(0, 2, ENV)
        assert correctness_prob(512, p, ENV) == pytest.approx(0.5, abs=1e-15)

    def test_saturation(self):
        p = problem_for_tier(0, 3, ENV)
        assert correctness_prob(1e6, p, ENV) == pytest.approx(0.95, abs=1e-15)
        assert correctness_prob(0, p, ENV) == pytest.approx(0.05, abs=1e-9)

    def test_sigmoid_two(self):
        p = problem_for_tier(0, 1, ENV)
        oracle = mp.mpf("0.05") + mp.mpf("0.9") / (1 + mp.e ** -2)
        assert correctness_prob(128 + 128, p, ENV) == pytest.approx(float(oracle), abs=1e-15)
        assert correctness_prob(256, p, ENV) == pytest.approx(0.8428, abs=1e-4)

    @given(tier=st.integers(1, 3), n=st.lists(st.floats(0, 1e5), min_size=2, max_size=50))
    def test_monotone(self, tier, n):
        p = problem_for_tier(0, tier, ENV)
        n = sorted(n)
        probs = [correctness_prob(x, p, ENV) for x in n]
        assert all(a <= b for a, b in zip(probs, probs[1:]))

    def test_vector_matches_scalar(self):
        p = problem_for_tier(0, 3, ENV)
        n = np.array([0, 100, 1500, 1536, 1600, 3072, 50000], dtype=float)
        np.testing.assert_allclose(correctness_probs(n, p.required_length, ENV),
                                   [correctness_prob(x, p, ENV) for x in n], rtol=1e-14)


class TestSampling:
    def test_degenerate_bernoulli(self):
        p = problem_for_tier(0, 3, ENV)
        always = EnvConfig(p_floor=1.0, p_ceil=1.0)
        never = EnvConfig(p_floor=0.0, p_ceil=0.0)
        rng = RngState.from_seed(7)
        for _ in range(50):
            ok, _ = sample_outcome(10, p, always, rng)
            bad, rng = sample_outcome(5000, p, never, rng)
            assert ok and not bad

    def test_reproducible(self):
        p = problem_for_tier(0, 2, ENV)
        a = [sample_outcome(512, p, ENV, RngState.from_seed(42).advance(i))[0] for i in range(64)]
        b = [sample_outcome(512, p, ENV, RngState.from_seed(42).advance(i))[0] for i in range(64)]
        assert a == b
        assert 0 < sum(a) < 64

    def test_rng_state_advances(self):
        _, nxt = sample_outcome(1, problem_for_tier(0, 1, ENV), ENV, RngState.from_seed(1))
        assert nxt.counter == 1

    def test_empirical_frequency(self):
        p = problem_for_tier(0, 2, ENV)
        n_gen = 540.0
        prob = correctness_prob(n_gen, p, ENV)
        draws = sample_outcomes(np.full(10_000, n_gen), p, ENV, generator(0, 1))
        se = np.sqrt(prob * (1 - prob) / 10_000)
        assert abs(draws.mean() - prob) < 3 * se


class TestDataset:
    def test_support(self):
        probs = make_dataset(3, ENV, generator(1))
        assert len(probs) == 3
        assert all(p.tier in (1, 2, 3) for p in probs)
        assert all(p.required_length == ENV.required_lengths[p.tier - 1] for p in probs)

    def test_same_seed_same_dataset(self):
        assert make_dataset(100, ENV, generator(5)) == make_dataset(100, ENV, generator(5))
        assert make_dataset(100, ENV, RngState.from_seed(5)) == \
            make_dataset(100, ENV, RngState.from_seed(5))

    def test_single_tier(self):
        env = EnvConfig(tiers=1, required_lengths=(256,))
        assert {p.tier for p in make_dataset(50, env, generator(0))} == {1}

    def test_tiers_roughly_uniform(self):
        tiers = [p.tier for p in make_dataset(30_000, ENV, generator(2))]
        counts = np.bincount(tiers)[1:] / len(tiers)
        assert np.all(np.abs(counts - 1 / 3) < 0.015)

    def test_dump(self, tmp_path):
        path = tmp_path / "ds.jsonl"
        dump_dataset([Problem(0, 1, 128), Problem(1, 3, 1536)], path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert rows == [{"id": 0, "tier": 1, "L_req": 128}, {"id": 1, "tier": 3, "L_req": 1536}]

    def test_zero_problems_rejected(self):
        with pytest.raises(ConfigError):
            make_dataset(0, ENV, generator(0))


@pytest.mark.parametrize("kwargs", [
    {"tiers": 0},
    {"required_lengths": (128, 512)},
    {"required_lengths": (512, 128, 1536)},
    {"p_floor": 0.9, "p_ceil": 0.1},
    {"p_ceil": 1.5},
    {"tau": 0},
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        EnvConfig(**kwargs)


def test_hardest_tier_below_l_max():
    with pytest.raises(ConfigError, match="env.required_lengths"):
        EnvConfig(required_lengths=(128, 512, 4096)).validate_against(4096)
