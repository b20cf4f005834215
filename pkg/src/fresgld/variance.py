"""Estimators of the gradient and energy noise levels credited by f-reSGLD.

Three estimators share one small interface::

    est.gradient_factor(theta)   # s_hat, (p, p) or (..., p, p)
    est.energy_variance(theta)   # sigma_hat^2, shape theta.shape[:-1]
    est.observe(model, theta, rng, chain=0)

``KnownVariance`` passes the true noise spec through, ``RunningVariance``
keeps a running mean of per-state sample variances, and
``KernelRidgeVariance`` regresses sample variance on the state.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist

from .targets import NoiseSpec, NoisyEnergyModel, as_state

log = logging.getLogger(__name__)

DEFAULT_N_DRAWS = 10


def sample_variance_at_state(model: NoisyEnergyModel, theta, n_draws: int = DEFAULT_N_DRAWS,
                             rng: np.random.Generator | None = None,
                             target: str = "gradient") -> np.ndarray:
    """Unbiased sample variance of ``n_draws`` independent estimator calls at ``theta``.

    ``target="gradient"`` gives a componentwise variance vector of length
    ``p``; ``target="energy"`` a scalar.
    """
    if n_draws < 2:
        raise ValueError("n_draws must be >= 2")
    theta = as_state(theta, model.dim)
    call = model.noisy_gradient if target == "gradient" else model.noisy_energy
    # one batched call: each row of the tiled state gets its own noise draw
    draws = call(np.broadcast_to(theta, (n_draws,) + theta.shape), rng=rng)
    return np.var(draws, axis=0, ddof=1)


def _diag_factor(var: np.ndarray) -> np.ndarray:
    root = np.sqrt(np.clip(var, 0.0, None))
    return root[..., :, None] * np.eye(root.shape[-1])


class KnownVariance:
    """Pass-through of the true noise specification."""

    kind = "known"

    def __init__(self, noise: NoiseSpec):
        self.noise = noise

    def gradient_factor(self, theta):
        return self.noise.gradient_factor(theta)

    def energy_variance(self, theta):
        return self.noise.energy_sd(theta) ** 2

    def observe(self, model, theta, rng, chain=0):
        pass


class RunningVariance:
    """Constant-variance estimate updated by ``v_k = (1 - 1/k) v_{k-1} + obs / k``.

    Holds one gradient variance per coordinate and one energy variance.  The
    first observation overwrites ``initial``.  Observing an ensemble of states
    ``(..., p)`` keeps one estimate per ensemble member.
    """

    kind = "running_constant"

    def __init__(self, dim: int, n_draws: int = DEFAULT_N_DRAWS, initial: float = 0.0):
        self.dim = dim
        self.n_draws = n_draws
        self.grad_var = np.full(dim, float(initial))
        self.energy_var = float(initial)
        self.count = 0

    def update(self, grad_obs, energy_obs=None) -> None:
        self.count += 1
        w = 1.0 / self.count
        self.grad_var = (1.0 - w) * self.grad_var + w * np.asarray(grad_obs, dtype=float)
        if energy_obs is not None:
            self.energy_var = (1.0 - w) * self.energy_var + w * np.asarray(energy_obs, dtype=float)

    def observe(self, model, theta, rng, chain=0):
        theta = as_state(theta, self.dim)
        g = sample_variance_at_state(model, theta, self.n_draws, rng, "gradient")
        e = sample_variance_at_state(model, theta, self.n_draws, rng, "energy")
        self.update(g, e)

    def gradient_factor(self, theta):
        return _diag_factor(self.grad_var)

    def energy_variance(self, theta):
        return np.full(as_state(theta).shape[:-1], self.energy_var)


def running_update(est: RunningVariance, observed) -> RunningVariance:
    """Apply one step of the running-mean recursion to the gradient variance."""
    if not isinstance(est, RunningVariance):
        raise TypeError("running_update needs a RunningVariance")
    est.update(observed)
    return est


def rbf_kernel(x, y, bandwidth: float) -> np.ndarray:
    d2 = cdist(np.atleast_2d(x), np.atleast_2d(y), "sqeuclidean")
    return np.exp(-d2 / (2.0 * bandwidth**2))


def median_bandwidth(inputs) -> float:
    x = np.asarray(inputs, dtype=float)
    x = x.reshape(len(x), -1)
    if len(x) < 2:
        return 1.0
    d = pdist(x)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


@dataclass(frozen=True)
class KrrModel:
    inputs: np.ndarray    # (n, p)
    targets: np.ndarray   # (n,) or (n, k)
    bandwidth: float
    ridge: float
    weights: np.ndarray   # same shape as targets

    def residual_norm(self) -> float:
        k = rbf_kernel(self.inputs, self.inputs, self.bandwidth)
        r = (k + self.ridge * np.eye(len(k))) @ self.weights - self.targets
        return float(np.linalg.norm(r))

    def save(self, path) -> None:
        record = {
            "bandwidth": self.bandwidth,
            "ridge": self.ridge,
            "inputs": self.inputs.tolist(),
            "targets": self.targets.tolist(),
            "weights": self.weights.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(record, fh, indent=1)

    @classmethod
    def load(cls, path) -> "KrrModel":
        with open(path) as fh:
            r = json.load(fh)
        return cls(np.asarray(r["inputs"], dtype=float), np.asarray(r["targets"], dtype=float),
                   float(r["bandwidth"]), float(r["ridge"]), np.asarray(r["weights"], dtype=float))


def krr_fit(inputs, targets, bandwidth: float | None = None, ridge: float = 1e-3) -> KrrModel:
    """Solve ``(K + ridge I) w = y`` for a Gaussian RBF kernel.

    ``bandwidth=None`` uses the median pairwise distance of the inputs.
    """
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=float)
    if len(x) < 1 or len(x) != len(y):
        raise ValueError("need at least one (input, target) pair with matching lengths")
    if bandwidth is None:
        bandwidth = median_bandwidth(x)
    if not bandwidth > 0 or not ridge > 0:
        raise ValueError("bandwidth and ridge must be positive")
    k = rbf_kernel(x, x, bandwidth)
    w = cho_solve(cho_factor(k + ridge * np.eye(len(x))), y)
    return KrrModel(x, y, float(bandwidth), float(ridge), w)


def krr_predict(model: KrrModel, theta, warn: bool = True) -> np.ndarray:
    """Kernel expansion at ``theta`` (shape ``(..., p)``), clamped below at zero.

    A warning is logged when clamping happens unless ``warn`` is false.
    """
    theta = as_state(theta, model.inputs.shape[1])
    batch = theta.shape[:-1]
    k = rbf_kernel(theta.reshape(-1, theta.shape[-1]), model.inputs, model.bandwidth)
    pred = k @ model.weights
    if np.any(pred < 0):
        if warn:
            log.warning("clamping %d negative variance predictions to 0", int(np.sum(pred < 0)))
        pred = np.clip(pred, 0.0, None)
    return pred.reshape(batch + model.weights.shape[1:])


class KernelRidgeVariance:
    """Nonparametric variance estimate fitted on the first ``n_train`` observed states.

    Only observations from ``source_chain`` (default: the high-temperature
    chain) are collected; pass the same instance for both chains to share the
    fit.  Until the fit happens the running mean of the collected sample
    variances is used.  For an ensemble of states ``(..., p)`` every member
    gets its own fit on its own trajectory.
    """

    kind = "kernel_ridge"

    def __init__(self, dim: int, n_train: int = 100, bandwidth: float | None = None,
                 ridge: float = 1e-3, n_draws: int = DEFAULT_N_DRAWS, source_chain: int = 1):
        self.dim = dim
        self.n_train = n_train
        self.bandwidth = bandwidth
        self.ridge = ridge
        self.n_draws = n_draws
        self.source_chain = source_chain
        self._x, self._g, self._e = [], [], []
        self.fallback = RunningVariance(dim, n_draws)
        self.gradient_model: KrrModel | None = None
        self.energy_model: KrrModel | None = None
        self._warned = False
        self._batch = None

    @property
    def fitted(self) -> bool:
        return self.gradient_model is not None

    def observe(self, model, theta, rng, chain=0):
        if self.fitted or chain != self.source_chain:
            return
        theta = as_state(theta, self.dim)
        g = sample_variance_at_state(model, theta, self.n_draws, rng, "gradient")
        e = sample_variance_at_state(model, theta, self.n_draws, rng, "energy")
        self._x.append(theta.copy())
        self._g.append(g)
        self._e.append(e)
        self.fallback.update(g, e)
        if len(self._x) >= self.n_train:
            self.fit(np.array(self._x), np.array(self._g), np.array(self._e))

    def fit(self, inputs, grad_var, energy_var) -> None:
        """Fit on ``inputs`` of shape ``(n, p)``, or ``(n, ..., p)`` for an ensemble."""
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim <= 2:
            self.gradient_model = krr_fit(inputs, grad_var, self.bandwidth, self.ridge)
            self.energy_model = krr_fit(inputs, energy_var, self.gradient_model.bandwidth, self.ridge)
            self._batch = None
            return
        n, p = inputs.shape[0], inputs.shape[-1]
        x = inputs.reshape(n, -1, p).swapaxes(0, 1)
        g = np.asarray(grad_var, dtype=float).reshape(n, -1, p).swapaxes(0, 1)
        e = np.asarray(energy_var, dtype=float).reshape(n, -1).T
        self.gradient_model = [krr_fit(xb, gb, self.bandwidth, self.ridge) for xb, gb in zip(x, g)]
        self.energy_model = [krr_fit(xb, eb, gm.bandwidth, self.ridge)
                             for xb, eb, gm in zip(x, e, self.gradient_model)]
        # stacked copies for one vectorized kernel evaluation per step
        self._batch = (inputs.shape[1:-1], x, np.array([m.bandwidth for m in self.gradient_model]),
                       np.stack([m.weights for m in self.gradient_model]),
                       np.stack([m.weights for m in self.energy_model]))

    def gradient_factor(self, theta):
        if not self.fitted:
            return self.fallback.gradient_factor(theta)
        return _diag_factor(self._predict(self.gradient_model, theta, energy=False))

    def energy_variance(self, theta):
        if not self.fitted:
            return self.fallback.energy_variance(theta)
        return self._predict(self.energy_model, theta, energy=True)

    def _predict(self, model, theta, energy):
        if getattr(self, "_batch", None) is not None:
            pred = self._predict_batch(theta, energy)
        else:
            pred = krr_predict(model, theta, warn=False)
        # warn about clamping once per estimator, not once per step
        if not self._warned and np.any(pred == 0.0):
            log.warning("clamping negative variance predictions to 0")
            self._warned = True
        return pred

    def _predict_batch(self, theta, energy):
        batch, x, bw, wg, we = self._batch
        theta = as_state(theta, self.dim)
        if theta.shape[:-1] != batch:
            raise ValueError(f"fitted on an ensemble of shape {batch}, got states {theta.shape}")
        t = theta.reshape(-1, 1, self.dim)
        k = np.exp(-np.sum((x - t) ** 2, axis=-1) / (2.0 * bw[:, None] ** 2))
        pred = np.einsum("bn,bn->b", k, we) if energy else np.einsum("bn,bnp->bp", k, wg)
        pred = np.clip(pred, 0.0, None)
        return pred.reshape(batch) if energy else pred.reshape(batch + (self.dim,))
