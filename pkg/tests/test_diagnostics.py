import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fresgld.diagnostics import (RunMetrics, gaussian_quantile, kde, midpoint_levels, mixture_quantile,
                                 silverman_bandwidth, swap_summary, wasserstein2_1d,
                                 wasserstein2_gaussian, wasserstein2_vs_target)
from fresgld.samplers import SampleTrace
from fresgld.targets import GaussianMixture

import oracles

# Frozen from oracles.mixture_median (brentq) and oracles.mixture_rms_about (quad).
MIXTURE_MEDIAN = 2.5162892169491493
RMS_ABOUT_MEDIAN = 4.179855946866459

finite = st.floats(-1e3, 1e3, allow_nan=False)


def _trace(swapped, energies=None):
    n = len(swapped)
    e = np.zeros((n, 2)) if energies is None else np.asarray(energies, dtype=float)
    return SampleTrace((1.0, 10.0), np.zeros((n, 2, 1)), e, np.asarray(swapped, bool), np.full(n, 0.03))


class TestKde:
    def test_peak_at_repeated_value(self):
        d = kde(np.full(50, 1.7), np.linspace(0, 3, 301), bandwidth=0.05)
        assert d.grid[np.argmax(d.values)] == pytest.approx(1.7)

    def test_standard_normal(self):
        x = np.random.default_rng(0).standard_normal(10**6)
        d = kde(x, np.linspace(-4, 4, 161))
        assert np.abs(d.values - stats.norm.pdf(d.grid)).max() < 0.01

    def test_mass(self):
        x = np.random.default_rng(1).normal(size=500) * 3
        bw = silverman_bandwidth(x)
        d = kde(x, np.linspace(x.min() - 5 * bw, x.max() + 5 * bw, 2000), bw)
        assert abs(d.integral() - 1) < 0.02
        assert abs(kde(x).integral() - 1) < 0.02

    def test_errors(self):
        with pytest.raises(ValueError):
            kde([])
        with pytest.raises(ValueError):
            kde([1.0, 2.0], bandwidth=0.0)

    def test_csv(self, tmp_path):
        d = kde([0.0, 1.0])
        d.to_csv(tmp_path / "kde.csv")
        back = np.loadtxt(tmp_path / "kde.csv", delimiter=",", skiprows=1)
        np.testing.assert_array_equal(back[:, 1], d.values)


class TestWasserstein1d:
    def test_examples(self):
        assert wasserstein2_1d([0.0], [1.0]) == 1.0
        x = np.random.default_rng(2).normal(size=100)
        assert wasserstein2_1d(x, x) == 0.0
        assert wasserstein2_1d(x, x + 2.5) == pytest.approx(2.5, rel=1e-14)

    def test_matches_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a, b = rng.normal(size=40), rng.exponential(size=40)
            assert wasserstein2_1d(a, b) == pytest.approx(oracles.w2_sorted(a, b), rel=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(finite, min_size=1, max_size=30).flatmap(
        lambda a: st.tuples(st.just(a), st.lists(finite, min_size=len(a), max_size=len(a)),
                            st.lists(finite, min_size=len(a), max_size=len(a)))))
    def test_metric(self, abc):
        a, b, c = (np.array(v) for v in abc)
        ab, ba = wasserstein2_1d(a, b), wasserstein2_1d(b, a)
        assert abs(ab - ba) <= 1e-15 * max(1.0, ab)
        assert ab <= wasserstein2_1d(a, c) + wasserstein2_1d(c, b) + 1e-9
        assert (ab == 0) == (sorted(a) == sorted(b))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(-100, 100), min_size=2, max_size=20), st.integers(-50, 50))
    def test_translation(self, a, shift):
        a = np.array(a, dtype=float)
        b = a[::-1] * 0.5
        assert wasserstein2_1d(a + shift, b + shift) == wasserstein2_1d(a, b)

    def test_unequal_lengths(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=30000), rng.normal(size=20000) + 1.0
        assert wasserstein2_1d(a, b) == pytest.approx(1.0, abs=0.03)

    def test_empty(self):
        with pytest.raises(ValueError):
            wasserstein2_1d([], [1.0])


class TestTargetDistance:
    def test_median_mass(self):
        assert MIXTURE_MEDIAN == pytest.approx(oracles.mixture_median(), abs=1e-12)
        assert RMS_ABOUT_MEDIAN == pytest.approx(oracles.mixture_rms_about(MIXTURE_MEDIAN), rel=1e-12)
        q = mixture_quantile(GaussianMixture())
        assert q(np.array([0.5]))[0] == pytest.approx(MIXTURE_MEDIAN, abs=1e-9)
        w = wasserstein2_vs_target(np.full(100, MIXTURE_MEDIAN), q)
        assert w == pytest.approx(RMS_ABOUT_MEDIAN, rel=1e-3)

    def test_quantile_is_cdf_inverse(self):
        m = GaussianMixture()
        u = midpoint_levels(1000)
        np.testing.assert_allclose(m.cdf(mixture_quantile(m)(u)), u, atol=1e-9)

    def test_level_refinement(self):
        x = np.random.default_rng(5).normal(size=5000)
        q = mixture_quantile(GaussianMixture())
        assert abs(wasserstein2_vs_target(x, q, 10**3) - wasserstein2_vs_target(x, q, 10**4)) < 1e-3

    def test_exact_gaussian_draws(self):
        for seed in range(5):
            x = np.random.default_rng(seed).standard_normal(10**5)
            assert wasserstein2_vs_target(x, gaussian_quantile()) < 0.02

    def test_gaussian_closed_form(self):
        assert wasserstein2_gaussian(0.0, 1.0, 0.0, 1.0) == 0.0
        assert wasserstein2_gaussian(1.0, 4.0, 0.0, 1.0) == pytest.approx(math.sqrt(2.0))
        a = np.array([[2.0, 0.3], [0.3, 1.0]])
        assert wasserstein2_gaussian([0, 0], a, [1, 0], a) == pytest.approx(1.0, abs=1e-12)


class TestSwapSummary:
    def test_counts(self):
        assert swap_summary(_trace([False] * 10)).swap_acceptance_rate == 0.0
        assert swap_summary(_trace([True] * 10)).swap_acceptance_rate == 1.0
        assert swap_summary(_trace([True] * 3 + [False] * 7)).swap_acceptance_rate == pytest.approx(0.3)

    def test_energy_means(self):
        m = swap_summary(_trace([False] * 4, [[1, 10], [2, 20], [3, 30], [np.nan, np.nan]]), 0.5)
        assert (m.mean_energy_low, m.mean_energy_high, m.w2_to_truth, m.n_samples) == (2.0, 20.0, 0.5, 4)
        assert set(json.loads(m.to_json())) == set(RunMetrics.__dataclass_fields__)

    def test_empty(self):
        with pytest.raises(ValueError):
            swap_summary(_trace([]))
