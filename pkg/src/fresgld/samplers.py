"""Langevin step kernels and the two-chain replica-exchange driver.

Random draws come from separate streams so that samplers can be coupled:

* each ``ChainState`` owns the stream for its injected noise ``xi``;
* each ``NoisyEnergyModel`` owns the stream for estimator noise (per step:
  gradient noise during the move, then energy noise during the swap);
* the ``ReplicaPair`` owns the stream for swap coins;
* variance estimators draw their probes from a fourth stream.

With zero estimator noise every variant therefore consumes the same injected
noise and swap coins, and the traces agree bit for bit.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .targets import EnergyModel, NoisyEnergyModel, as_state

log = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)
EIG_TOL = 1e-12
LOG_RATE_CAP = 700.0

SAMPLER_KINDS = ("ld", "sgld", "resgld", "m_resgld", "f_resgld")
SWAP_KINDS = ("reld_exact", "resgld", "m_resgld", "f_resgld")


class StepTooLarge(ValueError):
    """The corrected injected-noise covariance is not positive semidefinite.

    ``max_eta`` is the largest admissible step size ``2 tau / lambda_max(s s^T)``.
    """

    def __init__(self, max_eta: float, eta: float, step: int | None = None):
        self.max_eta = float(max_eta)
        self.eta = float(eta)
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(
            f"step size {eta:g} too large for the gradient-noise estimate{where}; "
            f"need eta <= {self.max_eta:g}"
        )


class NonFiniteGradient(FloatingPointError):
    """Raised when a kernel meets a NaN/Inf gradient; carries the offending state."""

    def __init__(self, position, gradient, iteration):
        self.position = np.array(position)
        self.gradient = np.array(gradient)
        self.iteration = iteration
        super().__init__(
            f"non-finite gradient at iteration {iteration}: "
            f"position={self.position.tolist()}, gradient={self.gradient.tolist()}"
        )


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``eta_k``: a constant or an explicit sequence indexed by ``k``."""

    kind: str
    values: tuple

    @classmethod
    def constant(cls, eta: float) -> "StepSchedule":
        if not eta > 0:
            raise ValueError("step size must be positive")
        return cls("constant", (float(eta),))

    @classmethod
    def sequence(cls, etas: Sequence[float]) -> "StepSchedule":
        etas = tuple(float(e) for e in etas)
        if not etas or any(not e > 0 for e in etas):
            raise ValueError("step sizes must be positive")
        return cls("user_sequence", etas)

    def __call__(self, k: int) -> float:
        if self.kind == "constant":
            return self.values[0]
        if k >= len(self.values):
            raise IndexError(f"step schedule has {len(self.values)} entries, asked for step {k}")
        return self.values[k]


@dataclass(frozen=True)
class ChainState:
    position: np.ndarray
    temperature: float
    rng: np.random.Generator
    iteration: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "position", as_state(self.position))


def _check_gradient(chain: ChainState, g: np.ndarray) -> None:
    if not np.isfinite(g).all():
        raise NonFiniteGradient(chain.position, g, chain.iteration)


def _advance(chain: ChainState, drift_grad, noise, eta: float) -> ChainState:
    position = chain.position - eta * drift_grad + SQRT2 * noise
    return replace(chain, position=position, iteration=chain.iteration + 1)


def ld_step(chain: ChainState, model: EnergyModel, eta: float) -> ChainState:
    """Exact update ``theta - eta grad U + sqrt(2 eta tau) xi``."""
    g = model.gradient(chain.position)
    _check_gradient(chain, g)
    xi = chain.rng.standard_normal(chain.position.shape)
    return _advance(chain, g, np.sqrt(chain.temperature * eta) * xi, eta)


def sgld_step(chain: ChainState, model: NoisyEnergyModel, eta: float) -> ChainState:
    """Same as ``ld_step`` but driven by the noisy gradient estimator."""
    g = model.noisy_gradient(chain.position)
    _check_gradient(chain, g)
    xi = chain.rng.standard_normal(chain.position.shape)
    return _advance(chain, g, np.sqrt(chain.temperature * eta) * xi, eta)


def _is_diagonal(a: np.ndarray) -> bool:
    p = a.shape[-1]
    return p == 1 or not (a * (1.0 - np.eye(p))).any()


def effective_noise_factor(s_hat, eta: float, tau: float, clamp: bool = False) -> np.ndarray:
    """Factor ``c`` with ``c c^T = tau eta I - eta^2/2 s_hat s_hat^T``.

    ``s_hat`` may be a scalar, a ``(p, p)`` factor, or a batch ``(..., p, p)``.
    Eigenvalues of the right-hand side in ``[-1e-12, 0]`` are clamped to zero;
    anything more negative raises ``StepTooLarge`` unless ``clamp`` is set, in
    which case the deficit is zeroed with a warning (the chain then runs hotter
    than ``tau``).
    """
    s = np.asarray(s_hat, dtype=float)
    if s.ndim == 0:
        s = s.reshape(1, 1)
    elif s.ndim == 1:
        s = np.diag(s)
    if _is_diagonal(s):
        d = s.diagonal(axis1=-2, axis2=-1)
        cov_eigs = d * d
        lam = tau * eta - 0.5 * eta**2 * cov_eigs
        vecs = None
    else:
        cov = s @ np.swapaxes(s, -1, -2)
        p = cov.shape[-1]
        rhs = tau * eta * np.eye(p) - 0.5 * eta**2 * cov
        lam, vecs = np.linalg.eigh(rhs)
        cov_eigs = np.linalg.eigvalsh(cov)

    if (lam < -EIG_TOL).any():
        max_eta = 2.0 * tau / float(np.max(cov_eigs))
        if not clamp:
            raise StepTooLarge(max_eta, eta)
        log.warning("clamping injected noise: eta=%g exceeds admissible %g", eta, max_eta)
    root = np.sqrt(np.maximum(lam, 0.0))
    if vecs is None:
        return root[..., :, None] * np.eye(s.shape[-1])
    return (vecs * root[..., None, :]) @ np.swapaxes(vecs, -1, -2)


_FACTOR_CACHE: dict = {}


def _cached_noise_factor(s_hat, eta, tau, clamp):
    # constant estimators hand out one read-only array; reuse its factor
    if not (isinstance(s_hat, np.ndarray) and not s_hat.flags.writeable):
        return effective_noise_factor(s_hat, eta, tau, clamp)
    key = (id(s_hat), eta, tau, clamp)
    hit = _FACTOR_CACHE.get(key)
    if hit is not None and hit[0] is s_hat:
        return hit[1]
    c = effective_noise_factor(s_hat, eta, tau, clamp)
    if len(_FACTOR_CACHE) > 256:
        _FACTOR_CACHE.clear()
    _FACTOR_CACHE[key] = (s_hat, c)
    return c


def f_sgld_step(chain: ChainState, model: NoisyEnergyModel, variance, eta: float,
                clamp: bool = False) -> ChainState:
    """Bias-corrected update ``theta - eta grad_hat U + sqrt(2) c_hat xi``.

    ``variance`` supplies the estimated gradient-noise factor ``s_hat`` at the
    current position; ``c_hat`` shrinks the injected noise so that estimator
    noise plus injected noise matches the exact update in law.
    """
    g = model.noisy_gradient(chain.position)
    _check_gradient(chain, g)
    c = _cached_noise_factor(variance.gradient_factor(chain.position), eta,
                             chain.temperature, clamp)
    xi = chain.rng.standard_normal(chain.position.shape)
    noise = xi @ c.T if c.ndim == 2 else (c @ xi[..., None])[..., 0]
    return _advance(chain, g, noise, eta)


def _tau_delta(tau1: float, tau2: float) -> float:
    if not tau2 > tau1 > 0:
        raise ValueError("need tau2 > tau1 > 0")
    return 1.0 / tau1 - 1.0 / tau2


def _capped_exp(log_rate):
    return np.exp(np.minimum(np.maximum(log_rate, -LOG_RATE_CAP), LOG_RATE_CAP))


def swap_rate_exact(u1, u2, tau1: float, tau2: float):
    """``exp(tau_delta (U1 - U2))`` with ``tau_delta = 1/tau1 - 1/tau2``."""
    td = _tau_delta(tau1, tau2)
    return _capped_exp(td * (u1 - u2))


def swap_rate_resgld(u1_hat, u2_hat, var, tau1: float, tau2: float):
    """Single-variance rule ``exp(tau_delta (U1_hat - U2_hat - tau_delta var))``."""
    td = _tau_delta(tau1, tau2)
    return _capped_exp(td * (u1_hat - u2_hat - td * var))


def swap_rate_mresgld(u1_at_1, u1_at_2, u2_at_1, u2_at_2, var1, var2,
                      a1: float, a2: float, tau1: float, tau2: float):
    """Weighted two-estimator rule; needs both estimators at both states."""
    if a1 < 0 or a2 < 0 or abs(a1 + a2 - 1.0) > 1e-9:
        raise ValueError("need a1, a2 >= 0 with a1 + a2 = 1")
    td = _tau_delta(tau1, tau2)
    return _capped_exp(td * (a1 * (u1_at_1 - u1_at_2) + a2 * (u2_at_1 - u2_at_2)
                             - (a1**2 * var1 + a2**2 * var2) * td))


def swap_rate_fresgld(u1_at_1, u2_at_2, var1_at_1, var2_at_2, tau1: float, tau2: float):
    """One evaluation per chain; unbiased for independent Gaussian estimators."""
    td = _tau_delta(tau1, tau2)
    return _capped_exp(td * (u1_at_1 - u2_at_2 - td * (var1_at_1 + var2_at_2) / 2))


def swap_probability(rate, a: float, eta: float):
    """Per-step acceptance probability ``min(1, a eta min(1, rate))``."""
    return np.minimum(np.maximum(a * eta * np.minimum(1.0, rate), 0.0), 1.0)


@dataclass
class SwapRule:
    """How the swap rate is computed.

    ``variance_source`` is a pair of estimators (low, high) exposing
    ``energy_variance(theta)``; it is only consulted by the noisy rules.  The
    single-variance ``resgld`` rule assumes both estimators share the
    low-temperature chain's variance.
    """

    kind: str
    a: float = 1.0
    a1: float = 0.5
    a2: float = 0.5
    variance_source: tuple | None = None

    def __post_init__(self):
        if self.kind not in SWAP_KINDS:
            raise ValueError(f"unknown swap rule {self.kind!r}")
        if not self.a > 0:
            raise ValueError("swap intensity a must be positive")
        if self.kind == "m_resgld" and (
            self.a1 < 0 or self.a2 < 0 or abs(self.a1 + self.a2 - 1.0) > 1e-9
        ):
            raise ValueError("need a1, a2 >= 0 with a1 + a2 = 1")


class SwapEvent(NamedTuple):
    rate: np.ndarray
    probability: np.ndarray
    energies: np.ndarray  # (2, ...) estimates at the pre-exchange low/high positions
    swapped: np.ndarray


@dataclass
class ReplicaPair:
    low: ChainState
    high: ChainState
    swap_rule: SwapRule | None
    rng: np.random.Generator
    swap_attempts: int = 0
    swap_accepts: int = 0
    last_event: SwapEvent | None = None

    def __post_init__(self):
        _tau_delta(self.low.temperature, self.high.temperature)
        if self.low.position.shape != self.high.position.shape:
            raise ValueError("chains must share a position shape")

    @property
    def temperatures(self) -> tuple[float, float]:
        return self.low.temperature, self.high.temperature


def _swap_rate(pair: ReplicaPair, models):
    """Rate for the pair's rule plus the energy estimate attached to each chain."""
    rule = pair.swap_rule
    tau1, tau2 = pair.temperatures
    th1, th2 = pair.low.position, pair.high.position
    lo, hi = models
    if rule.kind == "reld_exact":
        u1, u2 = lo.energy(th1), hi.energy(th2)
        return swap_rate_exact(u1, u2, tau1, tau2), (u1, u2)
    v_lo, v_hi = rule.variance_source
    if rule.kind == "resgld":
        u1, u2 = lo.noisy_energy(th1), hi.noisy_energy(th2)
        rate = swap_rate_resgld(u1, u2, v_lo.energy_variance(th1), tau1, tau2)
        return rate, (u1, u2)
    if rule.kind == "f_resgld":
        u1, u2 = lo.noisy_energy(th1), hi.noisy_energy(th2)
        rate = swap_rate_fresgld(u1, u2, v_lo.energy_variance(th1),
                                 v_hi.energy_variance(th2), tau1, tau2)
        return rate, (u1, u2)
    u11, u12 = lo.noisy_energy(th1), lo.noisy_energy(th2)
    u21, u22 = hi.noisy_energy(th1), hi.noisy_energy(th2)
    # state-dependent variances enter through their average over the two states
    var1 = 0.5 * (v_lo.energy_variance(th1) + v_lo.energy_variance(th2))
    var2 = 0.5 * (v_hi.energy_variance(th1) + v_hi.energy_variance(th2))
    rate = swap_rate_mresgld(u11, u12, u21, u22, var1, var2, rule.a1, rule.a2, tau1, tau2)
    return rate, (u11, u22)


def attempt_swap(pair: ReplicaPair, eta: float, models) -> ReplicaPair:
    """Exchange positions with probability ``min(1, a eta min(1, rate))``.

    Works elementwise when the chains hold a batch of positions.  The pair is
    updated in place and returned; ``pair.last_event`` records the attempt.
    """
    rate, (e1, e2) = _swap_rate(pair, models)
    energies = np.array([e1, e2], dtype=float)
    if np.ndim(rate) == 0:
        # scalar fast path; same draw and comparison as the batched branch
        prob = min(max(pair.swap_rule.a * eta * min(1.0, float(rate)), 0.0), 1.0)
        swapped = np.bool_(pair.rng.random(()) < prob)
        if swapped:
            pair.low, pair.high = (replace(pair.low, position=pair.high.position),
                                   replace(pair.high, position=pair.low.position))
        pair.swap_attempts += 1
        pair.swap_accepts += int(swapped)
        pair.last_event = SwapEvent(rate, np.float64(prob), energies, swapped)
        return pair
    prob = swap_probability(rate, pair.swap_rule.a, eta)
    swapped = pair.rng.random(np.shape(prob)) < prob
    if swapped.any():
        th1, th2 = pair.low.position, pair.high.position
        mask = swapped[..., None]
        pair.low = replace(pair.low, position=np.where(mask, th2, th1))
        pair.high = replace(pair.high, position=np.where(mask, th1, th2))
    pair.swap_attempts += int(np.size(swapped))
    pair.swap_accepts += int(np.sum(swapped))
    pair.last_event = SwapEvent(rate, prob, energies, swapped)
    return pair


@dataclass
class SampleTrace:
    """Post-step, post-swap record of both chains.

    ``positions`` has shape ``(n_steps, 2, ..., p)`` with chain 0 the low
    temperature; ``energies`` holds the estimate attached to each recorded
    position (NaN when no swap rule is active).
    """

    temperatures: tuple[float, float]
    positions: np.ndarray
    energies: np.ndarray
    swapped: np.ndarray
    eta: np.ndarray
    swap_attempts: int = 0
    swap_accepts: int = 0
    sampler_kind: str = ""
    error: str | None = None

    @property
    def n_steps(self) -> int:
        return len(self.eta)

    def low_samples(self, burn_in: int = 0, n_retained: int | None = None) -> np.ndarray:
        x = self.positions[burn_in:, 0]
        return x if n_retained is None else x[:n_retained]

    def to_csv(self, path) -> None:
        if self.positions.ndim != 3:
            raise ValueError("CSV export needs an unbatched trace")
        p = self.positions.shape[-1]
        header = ["step", "chain_id", "temperature"] + [f"theta_{i}" for i in range(p)]
        header += ["energy_estimate", "swapped", "eta"]
        n = self.n_steps
        step = np.repeat(np.arange(1, n + 1), 2)
        chain = np.tile([0, 1], n)
        temp = np.tile(np.asarray(self.temperatures, dtype=float), n)
        body = np.column_stack([
            step, chain, temp, self.positions.reshape(2 * n, p),
            np.asarray(self.energies, dtype=float).reshape(2 * n),
            np.repeat(np.asarray(self.swapped, dtype=int), 2), np.repeat(self.eta, 2),
        ])
        fmt = ["%d", "%d", "%.17g"] + ["%.17g"] * p + ["%.17g", "%d", "%.17g"]
        np.savetxt(path, body, fmt=fmt, delimiter=",", header=",".join(header), comments="")

    @classmethod
    def from_csv(cls, path) -> "SampleTrace":
        data = np.genfromtxt(path, delimiter=",", names=True)
        names = data.dtype.names
        theta_cols = [n for n in names if n.startswith("theta_")]
        n = len(data) // 2
        pos = np.stack([data[c] for c in theta_cols], axis=-1).reshape(n, 2, len(theta_cols))
        temps = (float(data["temperature"][0]), float(data["temperature"][1]))
        swapped = data["swapped"].reshape(n, 2)[:, 0].astype(bool)
        return cls(temps, pos, data["energy_estimate"].reshape(n, 2), swapped,
                   data["eta"].reshape(n, 2)[:, 0], int(n), int(swapped.sum()))


def _exact(model):
    return model.base if isinstance(model, NoisyEnergyModel) else model


def _ld_kernel(chain, model, variance, eta, clamp):
    return ld_step(chain, _exact(model), eta)


def _sgld_kernel(chain, model, variance, eta, clamp):
    return sgld_step(chain, model, eta)


_KERNELS = {"ld": _ld_kernel, "sgld": _sgld_kernel, "resgld": _sgld_kernel,
            "m_resgld": _sgld_kernel, "f_resgld": f_sgld_step}


def run_replica_exchange(pair: ReplicaPair, models, variance, schedule: StepSchedule,
                         n_steps: int, sampler_kind: str, *,
                         probe_rng: np.random.Generator | None = None,
                         boundary: Callable[[np.ndarray], np.ndarray] | None = None,
                         clamp_noise: bool = False, record: bool = True,
                         callback: Callable[[int, ReplicaPair], None] | None = None,
                         ) -> SampleTrace:
    """Advance both chains ``n_steps`` times, attempting one swap per step.

    Per step: both chains move with the kernel for ``sampler_kind``, the
    optional ``boundary`` map is applied, a swap is attempted on the
    post-move positions (skipped for ``sgld``), then the variance estimators
    observe the new states.  ``StepTooLarge`` is re-raised with the step index.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if sampler_kind not in SAMPLER_KINDS:
        raise ValueError(f"unknown sampler kind {sampler_kind!r}")
    kernel = _KERNELS[sampler_kind]
    if probe_rng is None:
        probe_rng = np.random.default_rng()
    var_lo, var_hi = variance
    do_swap = sampler_kind != "sgld" and pair.swap_rule is not None
    swap_models = models
    if sampler_kind == "ld":
        swap_models = tuple(_exact(m) for m in models)

    shape = pair.low.position.shape
    if record:
        positions = np.empty((n_steps, 2) + shape)
        energies = np.full((n_steps, 2) + shape[:-1], np.nan)
        swapped = np.zeros(n_steps, dtype=bool) if len(shape) == 1 else np.zeros(
            (n_steps,) + shape[:-1], dtype=bool)
    etas = np.empty(n_steps)

    for est, model, ch in ((var_lo, models[0], 0), (var_hi, models[1], 1)):
        est.observe(model, (pair.low, pair.high)[ch].position, probe_rng, chain=ch)

    for k in range(n_steps):
        eta = schedule(k)
        etas[k] = eta
        try:
            low = kernel(pair.low, models[0], var_lo, eta, clamp_noise)
            high = kernel(pair.high, models[1], var_hi, eta, clamp_noise)
        except StepTooLarge as err:
            raise StepTooLarge(err.max_eta, err.eta, step=k) from err
        if boundary is not None:
            low = replace(low, position=boundary(low.position))
            high = replace(high, position=boundary(high.position))
        pair.low, pair.high = low, high
        if do_swap:
            attempt_swap(pair, eta, swap_models)
        if record:
            positions[k, 0] = pair.low.position
            positions[k, 1] = pair.high.position
            if do_swap:
                ev = pair.last_event
                energies[k] = ev.energies[::-1] if ev.swapped.ndim == 0 and ev.swapped else (
                    np.where(ev.swapped, ev.energies[::-1], ev.energies))
                swapped[k] = ev.swapped
        var_lo.observe(models[0], pair.low.position, probe_rng, chain=0)
        var_hi.observe(models[1], pair.high.position, probe_rng, chain=1)
        if callback is not None:
            callback(k, pair)

    if not record:
        positions = np.empty((0, 2) + shape)
        energies = np.empty((0, 2))
        swapped = np.zeros(0, dtype=bool)
    return SampleTrace(pair.temperatures, positions, energies, swapped, etas,
                       pair.swap_attempts, pair.swap_accepts, sampler_kind)
