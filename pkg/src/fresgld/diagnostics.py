"""Density estimates, Wasserstein-2 distances and swap summaries."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import ndtri

from .targets import GaussianMixture

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float).ravel()
    sd = np.std(x, ddof=1) if x.size > 1 else 0.0
    iqr = np.subtract(*np.percentile(x, [75, 25])) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    if spread <= 0:
        spread = 1.0
    return 0.9 * spread * x.size ** (-0.2)


@dataclass
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(trapezoid(self.values, self.grid))

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.grid, self.values]), delimiter=",",
                   header="grid,value", comments="", fmt="%.17g")


def default_grid(samples, bandwidth: float, n: int = 512, pad: float = 3.0) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    return np.linspace(x.min() - pad * bandwidth, x.max() + pad * bandwidth, n)


def kde(samples, grid=None, bandwidth: float | None = None, chunk: int = 1 << 16) -> DensityEstimate:
    """Gaussian kernel density estimate evaluated on ``grid``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("kde needs at least one sample")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    grid = default_grid(x, bandwidth) if grid is None else np.asarray(grid, dtype=float)
    dens = np.zeros_like(grid)
    for start in range(0, x.size, chunk):
        z = (grid[:, None] - x[None, start:start + chunk]) / bandwidth
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens *= _INV_SQRT_2PI / (bandwidth * x.size)
    return DensityEstimate(grid, dens, float(bandwidth))


def _empirical_quantiles(x: np.ndarray, levels: np.ndarray) -> np.ndarray:
    xs = np.sort(x)
    idx = np.clip(np.ceil(levels * xs.size).astype(int) - 1, 0, xs.size - 1)
    return xs[idx]


def _rms(d: np.ndarray) -> float:
    # scaled so tiny nonzero differences do not underflow to a zero distance
    m = float(np.max(np.abs(d))) if d.size else 0.0
    if m == 0.0 or not np.isfinite(m):
        return m
    return m * float(np.sqrt(np.mean((d / m) ** 2)))


def midpoint_levels(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def wasserstein2_1d(a, b, n_quantiles: int = 10_000) -> float:
    """W2 between two empirical measures on the line.

    Equal sizes use the exact sorted coupling; otherwise both quantile
    functions are compared at ``n_quantiles`` midpoint levels.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein2_1d needs nonempty samples")
    if a.size == b.size:
        d = np.sort(a) - np.sort(b)
    else:
        u = midpoint_levels(n_quantiles)
        d = _empirical_quantiles(a, u) - _empirical_quantiles(b, u)
    return _rms(d)


def wasserstein2_vs_target(samples, target_quantile: Callable[[np.ndarray], np.ndarray],
                           n_quantiles: int = 10_000) -> float:
    """W2 from an empirical sample to a target given by its quantile function."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need at least one sample")
    u = midpoint_levels(n_quantiles)
    d = _empirical_quantiles(x, u) - np.asarray(target_quantile(u), dtype=float)
    return _rms(d)


def gaussian_quantile(mean: float = 0.0, sd: float = 1.0):
    return lambda u: mean + sd * ndtri(u)


def mixture_quantile(model: GaussianMixture, tol: float = 1e-10, max_iter: int = 200):
    """Quantile function of a 1-D mixture by vectorized bisection on its CDF."""

    def q(u):
        u = np.asarray(u, dtype=float)
        lo = np.full(u.shape, -20.0)
        hi = np.full(u.shape, 20.0)
        for _ in range(60):
            below = model.cdf(lo) > u
            above = model.cdf(hi) < u
            if not (below.any() or above.any()):
                break
            lo = np.where(below, 2 * lo, lo)
            hi = np.where(above, 2 * hi, hi)
        else:
            raise ArithmeticError("could not bracket mixture quantile")
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            left = model.cdf(mid) < u
            lo = np.where(left, mid, lo)
            hi = np.where(left, hi, mid)
            if np.max(hi - lo) < tol:
                break
        return 0.5 * (lo + hi)

    return q


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def wasserstein2_gaussian(mean_a, cov_a, mean_b, cov_b) -> float:
    """Closed-form W2 between two Gaussians (used for linear-Gaussian chains)."""
    mean_a, mean_b = np.atleast_1d(mean_a), np.atleast_1d(mean_b)
    cov_a, cov_b = np.atleast_2d(cov_a), np.atleast_2d(cov_b)
    rb = _psd_sqrt(cov_b)
    cross = _psd_sqrt(rb @ cov_a @ rb)
    w2sq = np.sum((mean_a - mean_b) ** 2) + np.trace(cov_a + cov_b - 2.0 * cross)
    return float(np.sqrt(max(w2sq, 0.0)))


@dataclass
class RunMetrics:
    w2_to_truth: float
    swap_acceptance_rate: float
    mean_energy_low: float
    mean_energy_high: float
    n_samples: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def swap_summary(trace, w2_to_truth: float = float("nan"), n_samples: int | None = None) -> RunMetrics:
    """Accepted swaps per step and mean attached energy per chain."""
    if trace.n_steps == 0:
        raise ValueError("empty trace")
    rate = float(np.sum(trace.swapped)) / trace.n_steps
    e = np.asarray(trace.energies, dtype=float).reshape(trace.n_steps, 2, -1)
    with np.errstate(invalid="ignore"):
        means = [float(np.nanmean(e[:, c])) if np.any(np.isfinite(e[:, c])) else float("nan")
                 for c in (0, 1)]
    n = trace.n_steps if n_samples is None else n_samples
    return RunMetrics(float(w2_to_truth), rate, means[0], means[1], int(n))
