"""Divergence and speedup checks, including the alpha -> 1 limit."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orgengine.infotheory import (
    BrainstormConfig,
    Distribution,
    generalized_entropy,
    kl_divergence,
    measure_speedup,
    renyi_divergence,
)

from oracles import kl_oracle, renyi_oracle


def dist(*probs):
    return Distribution(np.array(probs), tuple(f"x{i}" for i in range(len(probs))))


@st.composite
def full_support_pair(draw, size=4):
    raw_p = draw(st.lists(st.floats(0.05, 1.0), min_size=size, max_size=size))
    raw_q = draw(st.lists(st.floats(0.05, 1.0), min_size=size, max_size=size))
    labels = tuple(f"x{i}" for i in range(size))
    return (
        Distribution.normalized(raw_p, labels),
        Distribution.normalized(raw_q, labels),
    )


class TestDistribution:
    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            dist(1.2, -0.2)

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError, match="sum"):
            dist(0.5, 0.4)

    def test_normalized_helper(self):
        d = Distribution.normalized([2, 6, 2], ("a", "b", "c"))
        assert d.probs.tolist() == [0.2, 0.6, 0.2]
        assert d.prob_of("b") == 0.6

    def test_label_count_checked(self):
        with pytest.raises(ValueError, match="labels"):
            Distribution(np.array([0.5, 0.5]), ("only",))


class TestRenyiDivergence:
    def test_identity_is_zero(self):
        d = dist(0.3, 0.2, 0.5)
        assert renyi_divergence(d, d, 2.0) == pytest.approx(0.0, abs=1e-12)
        assert renyi_divergence(d, d, 0.5) == pytest.approx(0.0, abs=1e-12)
        assert renyi_divergence(d, d, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_hand_value_alpha_two(self):
        p, q = dist(0.7, 0.3), dist(0.5, 0.5)
        expected = math.log2(0.49 / 0.5 + 0.09 / 0.5)
        got = renyi_divergence(p, q, 2.0)
        assert got == pytest.approx(expected, abs=1e-15)
        assert got == pytest.approx(0.21412, abs=1e-4)

    def test_disjoint_support_alpha_above_one_is_infinite(self):
        assert renyi_divergence(dist(1.0, 0.0), dist(0.0, 1.0), 2.0) == math.inf

    def test_alpha_below_one_drops_missing_q_terms(self):
        p, q = dist(0.5, 0.5), dist(1.0, 0.0)
        got = renyi_divergence(p, q, 0.5)
        assert got == pytest.approx(renyi_oracle([0.5, 0.5], [1.0, 0.0], 0.5), abs=1e-12)
        assert math.isfinite(got)

    def test_mismatched_outcomes_rejected(self):
        p = Distribution(np.array([0.5, 0.5]), ("a", "b"))
        q = Distribution(np.array([0.5, 0.5]), ("a", "c"))
        with pytest.raises(ValueError, match="outcome"):
            renyi_divergence(p, q, 2.0)

    def test_nonpositive_alpha_rejected(self):
        d = dist(0.5, 0.5)
        with pytest.raises(ValueError, match="alpha"):
            renyi_divergence(d, d, 0.0)
        with pytest.raises(ValueError, match="alpha"):
            renyi_divergence(d, d, -1.0)

    def test_matches_fsum_oracle(self, rng):
        for _ in range(50):
            p = Distribution.normalized(rng.uniform(0.05, 1, 5))
            q = Distribution.normalized(rng.uniform(0.05, 1, 5), p.labels)
            for alpha in (0.3, 0.5, 2.0, 3.5):
                assert renyi_divergence(p, q, alpha) == pytest.approx(
                    renyi_oracle(p.probs, q.probs, alpha), abs=1e-10
                )

    @settings(max_examples=100, deadline=None)
    @given(full_support_pair())
    def test_nonnegative(self, pair):
        p, q = pair
        for alpha in (0.5, 1.0, 2.0):
            assert renyi_divergence(p, q, alpha) >= 0.0

    def test_kl_limit_on_perturbation_pairs(self, rng):
        # The gap D_{1+h} - KL is h * Var_p[ln(p/q)] / (2 ln 2) to first
        # order, so the tight tolerance needs pairs with small log ratios;
        # q is a small multiplicative perturbation of p (still full support).
        for _ in range(30):
            p = Distribution.normalized(rng.uniform(0.05, 1, 4))
            q = Distribution.normalized(p.probs * np.exp(rng.normal(0, 0.05, 4)), p.labels)
            kl = kl_divergence(p, q)
            assert kl == pytest.approx(kl_oracle(p.probs, q.probs), abs=1e-12)
            assert abs(renyi_divergence(p, q, 1.0 + 1e-4) - kl) <= 1e-6
            assert abs(renyi_divergence(p, q, 1.0 - 1e-4) - kl) <= 1e-6

    def test_kl_limit_coarse_on_arbitrary_pairs(self, rng):
        for _ in range(30):
            p = Distribution.normalized(rng.uniform(0.05, 1, 4))
            q = Distribution.normalized(rng.uniform(0.05, 1, 4), p.labels)
            kl = kl_divergence(p, q)
            assert abs(renyi_divergence(p, q, 1.0 + 1e-4) - kl) <= 1e-3
            assert abs(renyi_divergence(p, q, 1.0 - 1e-4) - kl) <= 1e-3

    def test_monotone_in_alpha(self, rng):
        alphas = [0.25, 0.5, 0.9, 1.0, 1.5, 2.0, 3.0, 5.0]
        for _ in range(100):
            p = Distribution.normalized(rng.uniform(0.05, 1, 4))
            q = Distribution.normalized(rng.uniform(0.05, 1, 4), p.labels)
            values = [renyi_divergence(p, q, a) for a in alphas]
            for lo, hi in zip(values, values[1:]):
                assert hi >= lo - 1e-10


class TestGeneralizedEntropy:
    def test_uniform_identity_case(self):
        n = 6
        u = Distribution.uniform(tuple(f"x{i}" for i in range(n)))
        # sum_x n^-alpha * n^-(1-alpha) = 1, so the entropy is exactly 0
        assert generalized_entropy(u, u, 2.0) == pytest.approx(0.0, abs=1e-12)

    def test_negated_divergence_example(self):
        p, q = dist(0.7, 0.3), dist(0.5, 0.5)
        assert generalized_entropy(p, q, 2.0) == pytest.approx(-0.21412, abs=1e-4)

    def test_identity_holds_everywhere(self, rng):
        for _ in range(100):
            p = Distribution.normalized(rng.uniform(0.01, 1, 5))
            q = Distribution.normalized(rng.uniform(0.01, 1, 5), p.labels)
            alpha = float(rng.uniform(0.2, 4.0))
            if abs(alpha - 1.0) < 1e-3:
                alpha = 1.0
            h = generalized_entropy(p, q, alpha)
            d = renyi_divergence(p, q, alpha)
            assert abs(h + d) <= 1e-12


class TestBrainstormConfig:
    def test_validates_alpha_and_epsilon(self):
        with pytest.raises(ValueError):
            BrainstormConfig(alpha=0.0)
        with pytest.raises(ValueError):
            BrainstormConfig(alpha=2.0, epsilon=-0.1)
        assert BrainstormConfig(alpha=1.0).log_base == 2


class TestMeasureSpeedup:
    def test_no_information_gain_ratio_near_one(self):
        labels = tuple(f"x{i}" for i in range(4))
        d = Distribution.uniform(labels)
        report = measure_speedup(d, d, "x0", trials=100_000, seed=1)
        assert report.ratio == pytest.approx(1.0, rel=0.05)

    def test_concentrating_mass_quadruples_speed(self):
        labels = tuple(f"x{i}" for i in range(8))
        prior = Distribution.uniform(labels)
        posterior = Distribution.normalized([0.5] + [0.5 / 7] * 7, labels)
        report = measure_speedup(prior, posterior, "x0", trials=100_000, seed=2, epsilon_bits=1.8)
        assert report.mean_draws_prior == pytest.approx(8.0, rel=0.1)
        assert report.mean_draws_posterior == pytest.approx(2.0, rel=0.1)
        assert report.ratio == pytest.approx(4.0, rel=0.1)
        assert report.bound == pytest.approx(2.0**1.8)
        assert report.meets_bound  # measured ratio ~4 clears the 1.8-bit gate

    def test_small_masses(self):
        labels = tuple(f"x{i}" for i in range(3))
        prior = Distribution.normalized([0.01, 0.5, 0.49], labels)
        posterior = Distribution.normalized([0.02, 0.49, 0.49], labels)
        report = measure_speedup(prior, posterior, "x0", trials=100_000, seed=3)
        assert report.ratio == pytest.approx(2.0, rel=0.1)

    def test_zero_mass_target_rejected(self):
        labels = ("a", "b")
        prior = Distribution.normalized([0.0, 1.0], labels)
        posterior = Distribution.uniform(labels)
        with pytest.raises(ValueError, match="zero mass"):
            measure_speedup(prior, posterior, "a", trials=10, seed=0)

    def test_seeded_determinism(self):
        labels = tuple(f"x{i}" for i in range(4))
        prior = Distribution.uniform(labels)
        posterior = Distribution.normalized([0.4, 0.2, 0.2, 0.2], labels)
        a = measure_speedup(prior, posterior, "x0", trials=5000, seed=9)
        b = measure_speedup(prior, posterior, "x0", trials=5000, seed=9)
        assert a == b
