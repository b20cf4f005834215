import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fresgld.targets import (GaussianMixture, NoiseSpec, NoisyEnergyModel, Quadratic,
                             gaussian_mixture_energy, gaussian_mixture_gradient,
                             mixture_state_dependent_noise, quadratic_energy, quadratic_gradient)

import oracles

# Frozen from oracles.mixture_energy (scipy.stats pdfs), normalization checked by quadrature.
U_AT_3 = 0.7366169764107181
U_AT_MINUS_4 = 1.4785543211400953


class TestMixtureEnergy:
    def test_values_at_modes(self):
        np.testing.assert_allclose(gaussian_mixture_energy(3.0), U_AT_3, rtol=1e-13)
        np.testing.assert_allclose(gaussian_mixture_energy(-4.0), U_AT_MINUS_4, rtol=1e-13)

    def test_matches_oracle(self):
        for x in np.linspace(-9, 8, 35):
            np.testing.assert_allclose(gaussian_mixture_energy(x), oracles.mixture_energy(x),
                                       rtol=1e-12)

    def test_left_mode_is_first_component_alone(self):
        # second component is suppressed by e^-98 at -4
        expected = -np.log(0.4 / (0.7 * np.sqrt(2 * np.pi)))
        np.testing.assert_allclose(gaussian_mixture_energy(-4.0), expected, rtol=1e-12)

    def test_density_normalized(self):
        from scipy.integrate import quad

        m = GaussianMixture()
        total, _ = quad(lambda x: float(m.density(x)), -30, 30, points=[-4, 3], limit=200)
        assert abs(total - 1.0) < 1e-10

    def test_far_tail_is_finite(self):
        m = GaussianMixture()
        assert np.isfinite(m.energy(np.array([60.0]))) and np.isfinite(m.gradient(np.array([-60.0])))[0]

    def test_batched_shapes(self):
        m = GaussianMixture()
        x = np.zeros((4, 3, 1))
        assert m.energy(x).shape == (4, 3)
        assert m.gradient(x).shape == (4, 3, 1)

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            GaussianMixture(weights=(0.5, 0.6))
        with pytest.raises(ValueError):
            GaussianMixture(sds=(0.7, -1.0))


class TestMixtureGradient:
    def test_near_zero_at_modes(self):
        for x in (-4.0, 3.0):
            fd = oracles.central_difference(lambda t: oracles.mixture_energy(t[0]), np.array([x]))
            np.testing.assert_allclose(gaussian_mixture_gradient(x), fd, atol=1e-6)
            assert abs(gaussian_mixture_gradient(x)[0]) < 1e-9

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-10, 10))
    def test_matches_finite_differences(self, x):
        fd = oracles.central_difference(lambda t: oracles.mixture_energy(t[0]), np.array([x]))
        g = gaussian_mixture_gradient(x)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6)


class TestQuadratic:
    def test_examples(self):
        assert quadratic_energy(np.zeros(3), 5.0) == 0.0
        assert quadratic_energy([1.0, 1.0], 2.0) == 2.0
        np.testing.assert_array_equal(quadratic_gradient([1.0, 0.0], 2.0), [2.0, 0.0])

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(1)
        q = Quadratic(1.7, 3)
        for _ in range(100):
            x = rng.normal(size=3) * 3
            np.testing.assert_allclose(q.gradient(x), oracles.central_difference(q.energy, x),
                                       rtol=1e-5, atol=1e-7)

    def test_rejects_bad_curvature(self):
        with pytest.raises(ValueError):
            Quadratic(0.0)

    def test_dimension_checked(self):
        with pytest.raises(ValueError):
            Quadratic(1.0, 2).energy(np.zeros(3))


class TestNoiseSpec:
    def test_constant_forms(self):
        a = NoiseSpec.constant(2, 1.0, 3.0)
        np.testing.assert_array_equal(a.gradient_factor(np.zeros(2)), 3 * np.eye(2))
        b = NoiseSpec.constant(2, 0.0, [1.0, 2.0])
        np.testing.assert_array_equal(b.gradient_factor(np.zeros((5, 2))), np.diag([1.0, 2.0]))
        c = NoiseSpec.constant(2, 0.0, [[1.0, 0.0], [0.5, 1.0]])
        assert c.gradient_factor(np.zeros(2))[1, 0] == 0.5
        assert NoiseSpec.zero(3).is_zero and not a.is_zero

    def test_constant_factor_is_read_only(self):
        f = NoiseSpec.constant(1, 0.0, 2.0).gradient_factor(np.zeros(1))
        with pytest.raises(ValueError):
            f[0, 0] = 1.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            NoiseSpec.constant(1, -1.0, 1.0)
        with pytest.raises(ValueError):
            NoiseSpec.constant(1, 1.0, -1.0)
        with pytest.raises(ValueError):
            NoiseSpec.constant(2, 1.0, np.eye(3))

    def test_state_dependent_reference_values(self):
        spec = mixture_state_dependent_noise(GaussianMixture())
        np.testing.assert_allclose(spec.gradient_factor(np.zeros(1)), [[2.5]], rtol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50))
    def test_state_dependent_energy_sd_bounds(self, x):
        spec = mixture_state_dependent_noise(GaussianMixture())
        sd = float(spec.energy_sd(np.array([x])))
        assert 0.0 < sd <= 1.5

    def test_state_dependent_batch(self):
        spec = mixture_state_dependent_noise(GaussianMixture())
        f = spec.gradient_factor(np.linspace(-3, 3, 7)[:, None])
        assert f.shape == (7, 1, 1)
        assert np.all(np.diff(f[:, 0, 0]) > 0)


class TestNoisyEnergyModel:
    def test_zero_noise_is_exact(self):
        base = GaussianMixture()
        nm = NoisyEnergyModel(base, NoiseSpec.zero(1), np.random.default_rng(0))
        for x in np.linspace(-6, 6, 13):
            assert nm.noisy_energy(np.array([x])) == base.energy(np.array([x]))
            np.testing.assert_array_equal(nm.noisy_gradient(np.array([x])), base.gradient(np.array([x])))

    def test_energy_noise_moments(self):
        base = GaussianMixture()
        nm = NoisyEnergyModel(base, NoiseSpec.constant(1, 1.0, 0.0), np.random.default_rng(3))
        x = np.full((10**6, 1), 0.5)
        u = nm.noisy_energy(x)
        exact = float(base.energy(np.array([0.5])))
        assert abs(u.mean() - exact) < 3.3e-3
        assert abs(u.std(ddof=1) - 1.0) < 0.01

    def test_gradient_noise_moments(self):
        s = np.array([[2.0, 0.0], [1.0, 0.5]])
        base = Quadratic(1.0, 2)
        nm = NoisyEnergyModel(base, NoiseSpec.constant(2, 0.0, s), np.random.default_rng(4))
        theta = np.array([0.3, -1.2])
        n = 10**5
        g = nm.noisy_gradient(np.broadcast_to(theta, (n, 2)))
        cov = s @ s.T
        se_mean = np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(g.mean(0) - base.gradient(theta)) < 4 * se_mean)
        emp = np.cov(g, rowvar=False)
        # var of a sample covariance entry: (c_ii c_jj + c_ij^2) / n
        se_cov = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
        assert np.all(np.abs(emp - cov) < 4 * se_cov)

    def test_counts_evaluations(self):
        nm = NoisyEnergyModel(GaussianMixture(), NoiseSpec.constant(1, 1.0, 1.0),
                              np.random.default_rng(0))
        nm.noisy_energy(np.zeros(1))
        nm.noisy_gradient(np.zeros(1))
        nm.noisy_gradient(np.zeros(1))
        assert (nm.n_energy_evals, nm.n_gradient_evals) == (1, 2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            NoisyEnergyModel(Quadratic(1.0, 2), NoiseSpec.zero(1))
