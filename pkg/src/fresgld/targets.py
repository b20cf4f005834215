"""Energy models and Gaussian-noise estimator wrappers.

Every model works on positions of shape ``(..., p)``: a single state is a
length-``p`` vector and any leading axes are treated as a batch of
independent states.  Energies come back with the trailing axis removed,
gradients with the same shape as the input.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, ndtr

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _logsumexp(a, axis=-1, keepdims=False):
    # scipy's version costs ~100us per call on tiny arrays; samplers call this every step
    m = a.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))
    return out if keepdims else out.squeeze(axis=axis)


def as_state(theta, dim: int | None = None) -> np.ndarray:
    """Coerce ``theta`` to a float array with a trailing coordinate axis."""
    if not (type(theta) is np.ndarray and theta.dtype == np.float64):
        theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        theta = theta[None]
    if dim is not None and theta.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {theta.shape}")
    return theta


class EnergyModel:
    """Base class for exact energies ``U`` and gradients ``grad U``."""

    dim: int

    def energy(self, theta) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, theta) -> np.ndarray:
        raise NotImplementedError


class GaussianMixture(EnergyModel):
    """One-dimensional mixture energy ``U = -log sum_i w_i N(theta; mu_i, sd_i^2)``.

    Defaults are the two-component bimodal target used in the mixture
    experiments.
    """

    dim = 1

    def __init__(self, weights=(0.4, 0.6), means=(-4.0, 3.0), sds=(0.7, 0.5)):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.sds = np.asarray(sds, dtype=float)
        if not (self.weights.shape == self.means.shape == self.sds.shape):
            raise ValueError("weights, means and sds must have matching shapes")
        if np.any(self.weights <= 0) or np.any(self.sds <= 0):
            raise ValueError("mixture weights and sds must be positive")
        if not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("mixture weights must sum to 1")
        self._log_norm = np.log(self.weights) - np.log(self.sds) - _LOG_SQRT_2PI
        self._inv_var = 1.0 / self.sds**2

    def _log_components(self, x):
        z = (x[..., None] - self.means) / self.sds
        return self._log_norm - 0.5 * z * z

    def energy(self, theta):
        x = as_state(theta, 1)[..., 0]
        return -np.logaddexp.reduce(self._log_components(x), axis=-1)

    def gradient(self, theta):
        x = as_state(theta, 1)
        diff = x - self.means
        logc = self._log_norm - 0.5 * diff * diff * self._inv_var
        w = np.exp(logc - logc.max(axis=-1, keepdims=True))
        # responsibility-weighted component gradients
        return ((w * diff * self._inv_var).sum(axis=-1) / w.sum(axis=-1))[..., None]

    def density(self, x):
        """Normalized mixture density ``exp(-U)`` at scalar points ``x``."""
        x = np.asarray(x, dtype=float)
        return np.exp(_logsumexp(self._log_components(x), axis=-1))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(self.weights * ndtr((x[..., None] - self.means) / self.sds), axis=-1)


class Quadratic(EnergyModel):
    """Strongly convex energy ``(m/2) |theta|^2`` with Gaussian target ``N(0, tau/m I)``."""

    def __init__(self, m: float = 1.0, dim: int = 1):
        if m <= 0:
            raise ValueError("curvature m must be positive")
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.m = float(m)
        self.dim = int(dim)

    def energy(self, theta):
        theta = as_state(theta, self.dim)
        return 0.5 * self.m * np.sum(theta**2, axis=-1)

    def gradient(self, theta):
        return self.m * as_state(theta, self.dim)


def gaussian_mixture_energy(theta) -> np.ndarray:
    return GaussianMixture().energy(theta)


def gaussian_mixture_gradient(theta) -> np.ndarray:
    return GaussianMixture().gradient(theta)


def quadratic_energy(theta, m: float) -> np.ndarray:
    return Quadratic(m, as_state(theta).shape[-1]).energy(theta)


def quadratic_gradient(theta, m: float) -> np.ndarray:
    return Quadratic(m, as_state(theta).shape[-1]).gradient(theta)


@dataclass(frozen=True)
class NoiseSpec:
    """Covariance structure of the energy and gradient estimators.

    ``energy_sd(theta)`` is the standard deviation of the energy estimate;
    ``gradient_factor(theta)`` is a matrix ``s`` with gradient covariance
    ``s s^T``.  Constant specs return a single ``(p, p)`` matrix whatever the
    batch shape of ``theta``; state-dependent specs return ``(..., p, p)``.
    """

    dim: int
    energy_sd: Callable[[np.ndarray], np.ndarray]
    gradient_factor: Callable[[np.ndarray], np.ndarray]
    kind: str = "constant"
    is_zero: bool = False
    zero_energy: bool = False

    @classmethod
    def constant(cls, dim: int, energy_sd: float = 0.0, gradient_sd=0.0) -> "NoiseSpec":
        """Fixed noise levels; ``gradient_sd`` may be a scalar, a vector of
        per-coordinate sds, or a full ``(p, p)`` factor."""
        if energy_sd < 0:
            raise ValueError("energy_sd must be >= 0")
        gs = np.asarray(gradient_sd, dtype=float)
        if gs.ndim == 0:
            factor = float(gs) * np.eye(dim)
        elif gs.ndim == 1:
            factor = np.diag(gs)
        else:
            factor = gs.copy()
        if factor.shape != (dim, dim):
            raise ValueError(f"gradient factor must be ({dim}, {dim}), got {factor.shape}")
        if gs.ndim < 2 and np.any(gs < 0):
            raise ValueError("gradient sds must be >= 0")
        factor.setflags(write=False)
        sd = float(energy_sd)

        def energy_fn(theta):
            return np.full(as_state(theta).shape[:-1], sd)

        def factor_fn(theta):
            return factor

        zero = sd == 0.0 and not np.any(factor)
        return cls(dim, energy_fn, factor_fn, "constant", zero, sd == 0.0)

    @classmethod
    def zero(cls, dim: int) -> "NoiseSpec":
        return cls.constant(dim, 0.0, 0.0)

    @classmethod
    def state_dependent(cls, dim: int, energy_sd, gradient_sd) -> "NoiseSpec":
        """Build from callables ``energy_sd(theta) -> (...)`` and
        ``gradient_sd(theta) -> (..., p)`` (diagonal) or ``(..., p, p)``."""

        def factor_fn(theta):
            s = np.asarray(gradient_sd(theta), dtype=float)
            batch = as_state(theta).shape[:-1]
            if s.shape == batch + (dim,):
                return s[..., :, None] * np.eye(dim)
            return s

        def energy_fn(theta):
            return np.asarray(energy_sd(theta), dtype=float)

        return cls(dim, energy_fn, factor_fn, "state_dependent", False)


def mixture_state_dependent_noise(model: EnergyModel) -> NoiseSpec:
    """Logistic noise levels of the state-dependent mixture experiment.

    Gradient sd ``5 e^theta / (1 + e^theta)`` and energy sd
    ``3 e^U / (2 (1 + e^U))`` with ``U`` evaluated at the chain state.
    """

    def gradient_sd(theta):
        return 5.0 * expit(as_state(theta, 1))

    def energy_sd(theta):
        return 1.5 * expit(model.energy(theta))

    return NoiseSpec.state_dependent(1, energy_sd, gradient_sd)


@dataclass
class NoisyEnergyModel(EnergyModel):
    """Wrap an exact model with Gaussian energy and gradient estimators.

    ``noisy_energy`` returns ``U + sigma Z`` and ``noisy_gradient`` returns
    ``grad U + s zeta``, drawing ``Z`` and ``zeta`` from ``rng`` unless an
    explicit generator is passed.  Calls are counted so tests can audit how
    many estimator evaluations an algorithm spends.
    """

    base: EnergyModel
    noise: NoiseSpec
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    n_energy_evals: int = 0
    n_gradient_evals: int = 0

    def __post_init__(self):
        if self.noise.dim != self.base.dim:
            raise ValueError("noise spec and base model dimensions differ")

    @property
    def dim(self) -> int:
        return self.base.dim

    def energy(self, theta):
        return self.base.energy(theta)

    def gradient(self, theta):
        return self.base.gradient(theta)

    def noisy_energy(self, theta, rng: np.random.Generator | None = None):
        rng = self.rng if rng is None else rng
        theta = as_state(theta, self.dim)
        u = self.base.energy(theta)
        self.n_energy_evals += 1
        if self.noise.zero_energy:
            return u
        z = rng.standard_normal(theta.shape[:-1])
        return u + self.noise.energy_sd(theta) * z

    def noisy_gradient(self, theta, rng: np.random.Generator | None = None):
        rng = self.rng if rng is None else rng
        theta = as_state(theta, self.dim)
        g = self.base.gradient(theta)
        zeta = rng.standard_normal(theta.shape)
        s = self.noise.gradient_factor(theta)
        self.n_gradient_evals += 1
        if s.ndim == 2:
            return g + zeta @ s.T
        return g + np.einsum("...ij,...j->...i", s, zeta)
