import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pexlab import distributions as dist
from pexlab.distributions import (
    GaussianActor,
    GaussianPolicyHead,
    categorical_sample,
    gaussian_log_prob,
    gaussian_sample,
    greedy,
    softmax_temperature,
    squash_mean,
    zeta_sample,
)
from pexlab.errors import ShapeError

ZETA_2 = math.pi**2 / 6.0


def make_head(raw, log_std=0.0, low=-1.0, high=1.0, dim=1):
    return GaussianPolicyHead(
        np.full(dim, raw), np.full(dim, log_std), np.full(dim, low), np.full(dim, high)
    )


class TestSquash:
    def test_zero_raw_center_of_symmetric_range(self):
        out = squash_mean(np.zeros(3), -np.ones(3), np.ones(3))
        assert np.array_equal(out, np.zeros(3))

    def test_saturates_toward_high(self):
        out = squash_mean(np.array([10.0]), np.array([-1.0]), np.array([1.0]))
        assert out[0] > 0.999

    def test_matches_independent_tanh_evaluation(self):
        # range [-2, 2], raw 0.5: 2 * tanh(0.5)
        out = squash_mean(np.array([0.5]), np.array([-2.0]), np.array([2.0]))
        assert abs(out[0] - 2.0 * math.tanh(0.5)) < 1e-12

    def test_rejects_bad_bounds(self):
        with pytest.raises(ValueError):
            squash_mean(np.zeros(2), np.array([0.0, 1.0]), np.array([1.0, 1.0]))

    @given(st.floats(-50, 50), st.floats(-3, 2), st.floats(0.1, 5))
    def test_output_strictly_inside_range(self, raw, low, width):
        high = low + width
        out = squash_mean(np.array([raw]), np.array([low]), np.array([high]))
        assert low < out[0] < high


class TestGaussianLogProb:
    def test_standard_normal_at_mean(self):
        head = make_head(0.0, log_std=0.0)
        value = gaussian_log_prob(head, greedy(head))
        assert abs(value - (-0.5 * math.log(2 * math.pi))) < 1e-12

    def test_one_std_away_costs_half(self):
        head = make_head(0.3, log_std=0.0, low=-2, high=2)
        at_mean = gaussian_log_prob(head, greedy(head))
        away = gaussian_log_prob(head, greedy(head) + 1.0)
        assert abs((at_mean - away) - 0.5) < 1e-12

    def test_matches_independent_density_formula(self, rng):
        for _ in range(20):
            d = rng.integers(1, 5)
            head = GaussianPolicyHead(
                rng.normal(size=d), rng.uniform(-2, 1, d), -2 * np.ones(d), 2 * np.ones(d)
            )
            action = rng.normal(size=d)
            mean, std = head.mean, head.std
            expected = sum(
                -0.5 * ((action[i] - mean[i]) / std[i]) ** 2
                - math.log(std[i])
                - 0.5 * math.log(2 * math.pi)
                for i in range(d)
            )
            assert abs(gaussian_log_prob(head, action) - expected) < 1e-12

    def test_dimension_mismatch_rejected(self):
        head = make_head(0.0, dim=2)
        with pytest.raises(ShapeError):
            gaussian_log_prob(head, np.zeros(3))

    def test_maximized_at_greedy(self, rng):
        head = GaussianPolicyHead(
            rng.normal(size=2), rng.uniform(-1, 1, 2), -np.ones(2), np.ones(2)
        )
        best = gaussian_log_prob(head, greedy(head))
        for _ in range(100):
            perturbed = greedy(head) + rng.normal(0, 0.3, 2)
            assert gaussian_log_prob(head, perturbed) <= best

    def test_log_std_clamped_on_construction(self):
        head = make_head(0.0, log_std=-20.0)
        assert head.log_std[0] == dist.LOG_STD_MIN
        head = make_head(0.0, log_std=9.0)
        assert head.log_std[0] == dist.LOG_STD_MAX


class TestSampling:
    def test_tiny_std_concentrates_near_mean(self, rng):
        head = make_head(0.1, log_std=-20.0, low=-2, high=2)  # clamps to -5
        tol = 1e-2 * 4.0
        hits = sum(
            np.all(np.abs(gaussian_sample(head, rng) - head.mean) <= tol)
            for _ in range(10_000)
        )
        assert hits / 10_000 > 0.999

    def test_greedy_of_centered_head(self):
        assert greedy(make_head(0.0))[0] == 0.0

    def test_empirical_mean_clt_bound(self, rng):
        head = make_head(0.0, log_std=0.0, low=-10, high=10)
        draws = head.mean + head.std * rng.standard_normal((100_000, 1))
        draws = np.clip(draws, head.action_low, head.action_high)
        assert abs(draws.mean()) < 0.02

    def test_samples_respect_bounds(self, rng):
        head = make_head(3.0, log_std=1.5, low=-0.25, high=0.25)
        for _ in range(200):
            a = gaussian_sample(head, rng)
            assert np.all(a >= -0.25) and np.all(a <= 0.25)


class TestSoftmaxTemperature:
    def test_equal_values_give_uniform(self):
        for c in (-3.0, 0.0, 1e6):
            d = softmax_temperature(np.array([c, c]), 2.5)
            assert np.allclose(d.probabilities, [0.5, 0.5], atol=1e-15)

    def test_two_point_formula(self):
        d = softmax_temperature(np.array([1.0, 0.0]), 1.0)
        e = math.e
        assert abs(d.probabilities[0] - e / (e + 1)) < 1e-12
        assert abs(d.probabilities[1] - 1 / (e + 1)) < 1e-12

    def test_low_temperature_approaches_argmax(self):
        d = softmax_temperature(np.array([1.0, 0.0]), 0.01)
        assert d.probabilities[0] > 1 - 1e-10

    def test_rejects_nonpositive_temperature(self):
        with pytest.raises(ValueError):
            softmax_temperature(np.array([1.0, 0.0]), 0.0)

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6),
        st.floats(0.01, 100),
    )
    @settings(max_examples=200)
    def test_sums_to_one_even_for_huge_magnitudes(self, q, alpha):
        d = softmax_temperature(np.array(q), alpha)
        assert abs(d.probabilities.sum() - 1.0) < 1e-12
        assert np.all(d.probabilities >= 0)

    # Shift magnitudes are kept where float64 can actually hold 1e-12:
    # the roundoff of (q + c)/alpha grows like eps * |c| / alpha.
    @given(
        st.lists(st.floats(-100, 100), min_size=2, max_size=5),
        st.floats(0.1, 10),
        st.floats(-300, 300),
    )
    @settings(max_examples=200)
    def test_shift_invariance(self, q, alpha, shift):
        a = softmax_temperature(np.array(q), alpha).probabilities
        b = softmax_temperature(np.array(q) + shift, alpha).probabilities
        assert np.max(np.abs(a - b)) < 1e-12

    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.1, 10))
    def test_monotone_in_values(self, q0, q1, alpha):
        d = softmax_temperature(np.array([q0, q1]), alpha)
        if (q0 - q1) / alpha > 1e-12:
            assert d.probabilities[0] > d.probabilities[1]
        elif (q1 - q0) / alpha > 1e-12:
            assert d.probabilities[0] < d.probabilities[1]


def entropy_regularized_objective(p: np.ndarray, q: np.ndarray, alpha: float) -> float:
    """sum_i p_i * (q_i - alpha * ln p_i), with 0 * ln 0 = 0."""
    terms = np.where(p > 0, p * (q - alpha * np.log(np.where(p > 0, p, 1.0))), 0.0)
    return float(terms.sum())


def test_softmax_maximizes_entropy_regularized_value(rng):
    # The softmax distribution beats random simplex points on the
    # entropy-regularized objective, for K = 2.
    for _ in range(100):
        q = rng.normal(0, 3, size=2)
        alpha = float(rng.uniform(0.05, 5.0))
        p_star = softmax_temperature(q, alpha).probabilities
        best = entropy_regularized_objective(p_star, q, alpha)
        contenders = rng.dirichlet([1.0, 1.0], size=1000)
        for p in contenders:
            assert best > entropy_regularized_objective(p, q, alpha)


class TestCategorical:
    def test_degenerate_always_first(self, rng):
        d = softmax_temperature(np.array([1e9, 0.0]), 1.0)
        assert all(categorical_sample(d, rng) == 0 for _ in range(100))

    def test_fair_coin_frequency(self, rng):
        d = softmax_temperature(np.array([0.0, 0.0]), 1.0)
        draws = np.array([categorical_sample(d, rng) for _ in range(100_000)])
        assert abs((draws == 0).mean() - 0.5) < 0.01

    def test_biased_frequency(self, rng):
        d = softmax_temperature(np.array([1.0, 0.0]), 1.0)
        p0 = d.probabilities[0]
        draws = np.array([categorical_sample(d, rng) for _ in range(100_000)])
        assert abs((draws == 0).mean() - p0) < 0.01


def truncated_zeta_cdf(a: float, n_max: int) -> np.ndarray:
    """Analytic truncated CDF with tail mass on the last point; built from
    the series directly, independent of the production table."""
    n = np.arange(1, n_max + 1, dtype=np.float64)
    zeta_a = ZETA_2 if a == 2.0 else float(sum(k ** (-a) for k in range(1, 200_000)))
    pmf = n ** (-a) / zeta_a
    pmf[-1] += 1.0 - pmf.sum()
    return np.cumsum(pmf)


class TestZetaSampler:
    def test_point_masses_match_analytic_values(self, rng):
        draws = np.array([zeta_sample(2.0, rng) for _ in range(100_000)])
        assert abs((draws == 1).mean() - 1.0 / ZETA_2) < 0.02
        assert abs((draws == 2).mean() - 0.25 / ZETA_2) < 0.02

    def test_always_at_least_one(self, rng):
        for a in (1.5, 2.0, 4.0):
            assert min(zeta_sample(a, rng) for _ in range(2000)) >= 1

    def test_rejects_bad_parameter(self, rng):
        with pytest.raises(ValueError):
            zeta_sample(1.0, rng)

    def test_ks_statistic_against_truncated_cdf(self, rng):
        draws = np.array([zeta_sample(2.0, rng) for _ in range(10_000)])
        cdf = truncated_zeta_cdf(2.0, dist.ZETA_TABLE_MAX)
        values = np.arange(1, 200)
        empirical = np.array([(draws <= v).mean() for v in values])
        analytic = cdf[values - 1]
        assert np.max(np.abs(empirical - analytic)) < 0.02


class TestGaussianActor:
    def test_act_greedy_matches_head(self, rng):
        actor = GaussianActor.init(3, 2, [8], -np.ones(2), np.ones(2), rng)
        obs = rng.normal(size=3)
        assert np.array_equal(actor.act(obs, rng, explore=False), greedy(actor.head_for(obs)))

    def test_log_prob_batch_matches_per_state_heads(self, rng):
        actor = GaussianActor.init(3, 2, [8], -np.ones(2), np.ones(2), rng)
        obs = rng.normal(size=(5, 3))
        actions = rng.uniform(-1, 1, size=(5, 2))
        batch = actor.log_prob_batch(obs, actions)
        for i in range(5):
            single = gaussian_log_prob(actor.head_for(obs[i]), actions[i])
            assert abs(batch[i] - single) < 1e-12
