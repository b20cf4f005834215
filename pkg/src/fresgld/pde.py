"""Single-sensor inverse heat-equation benchmark.

The unknown is the center ``x0`` of a Gaussian initial bump.  The forward
model is the closed-form solution ``u(x, t) = beta exp(-|x - x0|^2 / alpha) e^{-t}``
and one sensor reads ``u`` at the terminal time, so every center at the same
distance from the sensor explains the data equally well: the posterior
concentrates on a circle around the sensor.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .targets import EnergyModel, as_state


@dataclass(frozen=True)
class HeatModelParams:
    h: float = 0.1
    T: float = 0.03
    sensor: tuple = (0.3, 0.5)
    x0_true: tuple = (0.5, 0.5)

    def __post_init__(self):
        for name in ("sensor", "x0_true"):
            pt = np.asarray(getattr(self, name), dtype=float)
            if pt.shape != (2,) or np.any(pt < 0) or np.any(pt > 1):
                raise ValueError(f"{name} must be a point in the unit square")

    @property
    def beta(self) -> float:
        return 1.0 / (2.0 * np.pi * self.h**2)

    @property
    def alpha(self) -> float:
        return 2.0 * self.h**2

    @property
    def r_star(self) -> float:
        return float(np.linalg.norm(np.subtract(self.x0_true, self.sensor)))


def forward_solution(params: HeatModelParams, x, t: float, x0=None) -> np.ndarray:
    """``beta exp(-|x - x0|^2 / alpha) exp(-t)``; ``x0`` defaults to ``params.x0_true``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    x0 = params.x0_true if x0 is None else x0
    d2 = np.sum((np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)) ** 2, axis=-1)
    return params.beta * np.exp(-d2 / params.alpha) * np.exp(-t)


class PdePosterior(EnergyModel):
    """Gaussian misfit energy over the bump center ``x0``.

    ``U(x0) = (u(sensor, T; x0) - y_obs)^2 / (2 obs_sd^2)``.  The observation
    defaults to the noiseless reading produced by ``params.x0_true``.
    """

    dim = 2

    def __init__(self, params: HeatModelParams | None = None, obs_sd: float = 0.1,
                 observation: float | None = None):
        self.params = HeatModelParams() if params is None else params
        if not obs_sd > 0:
            raise ValueError("obs_sd must be positive")
        self.obs_sd = float(obs_sd)
        if observation is None:
            observation = forward_solution(self.params, self.params.sensor, self.params.T)
        self.observation = float(observation)

    def _reading(self, x0):
        x0 = as_state(x0, 2)
        return forward_solution(self.params, self.params.sensor, self.params.T, x0=x0), x0

    def energy(self, theta):
        u, _ = self._reading(theta)
        return (u - self.observation) ** 2 / (2.0 * self.obs_sd**2)

    def gradient(self, theta):
        u, x0 = self._reading(theta)
        # du/dx0 = u * 2 (sensor - x0) / alpha
        du = u[..., None] * 2.0 * (np.asarray(self.params.sensor) - x0) / self.params.alpha
        return ((u - self.observation) / self.obs_sd**2)[..., None] * du


def pde_energy(posterior: PdePosterior, x0) -> np.ndarray:
    return posterior.energy(x0)


def pde_gradient(posterior: PdePosterior, x0) -> np.ndarray:
    return posterior.gradient(x0)


def reflect_unit_square(x: np.ndarray) -> np.ndarray:
    """Fold positions back into ``[0, 1]^2`` by mirror reflection (handles long jumps)."""
    y = np.mod(x, 2.0)
    return np.where(y > 1.0, 2.0 - y, y)


PDE_ARMS = ("s_reSGLD", "f_reSGLD", "l_reSGLD")


@dataclass(frozen=True)
class PdeArm:
    arm: str
    energy_sd: float
    gradient_sd: float
    sampler: str
    temperatures: tuple = (0.08, 0.5)


def make_pde_arm(arm: str) -> PdeArm:
    """Noise levels, temperatures and sampler for one of the three PDE arms.

    ``s_reSGLD`` is plain reSGLD with small injected noise; ``f_reSGLD`` and
    ``l_reSGLD`` share the large noise, with and without the bias correction.
    """
    if arm == "s_reSGLD":
        return PdeArm(arm, 0.1, 0.1, "resgld")
    if arm == "f_reSGLD":
        return PdeArm(arm, 0.8, 2.0, "f_resgld")
    if arm == "l_reSGLD":
        return PdeArm(arm, 0.8, 2.0, "resgld")
    raise ValueError(f"unknown PDE arm {arm!r}; expected one of {PDE_ARMS}")


@dataclass
class IqoiMetrics:
    arm: str
    n_samples: int
    annulus_coverage: float
    angular_bins_occupied: int
    r_star: float

    def to_json(self) -> str:
        return json.dumps({"arm": self.arm, "n_samples": self.n_samples,
                           "annulus_coverage": self.annulus_coverage,
                           "angular_bins_occupied": self.angular_bins_occupied,
                           "r_star": self.r_star})


def iqoi_metrics(samples, params: HeatModelParams, arm: str = "", half_width: float = 0.05,
                 n_bins: int = 36) -> IqoiMetrics:
    """How well 2-D samples cover the circle of centers consistent with the data.

    Annulus coverage is the fraction of samples within ``half_width`` of the
    true radius; angular coverage counts the ``n_bins`` equal angular sectors
    around the sensor holding at least one in-annulus sample.
    """
    x = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(x) == 0:
        raise ValueError("iqoi_metrics needs at least one sample")
    rel = x - np.asarray(params.sensor)
    r = np.hypot(rel[:, 0], rel[:, 1])
    inside = np.abs(r - params.r_star) <= half_width
    ang = np.mod(np.arctan2(rel[inside, 1], rel[inside, 0]), 2.0 * np.pi)
    bins = np.minimum((ang / (2.0 * np.pi) * n_bins).astype(int), n_bins - 1)
    return IqoiMetrics(arm, len(x), float(inside.mean()), int(np.unique(bins).size),
                       params.r_star)
