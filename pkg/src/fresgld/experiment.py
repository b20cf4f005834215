"""Run configured experiments over many seeds and compare sampler variants.

Each seed's master ``SeedSequence`` is split, in a fixed order, into named
streams so reruns are bit-identical and variants run on the same seed share
injected noise and swap coins.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .diagnostics import (gaussian_quantile, kde, mixture_quantile, swap_summary,
                          wasserstein2_gaussian, wasserstein2_vs_target)
from .pde import HeatModelParams, PdePosterior, iqoi_metrics, reflect_unit_square
from .samplers import (ChainState, NonFiniteGradient, ReplicaPair, StepSchedule, StepTooLarge,
                       SwapRule, run_replica_exchange)
from .targets import (GaussianMixture, NoiseSpec, NoisyEnergyModel, Quadratic,
                      mixture_state_dependent_noise)
from .variance import KernelRidgeVariance, KnownVariance, RunningVariance

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "FRESGLD_OUTPUT_DIR"
STREAMS = ("init", "chain_low", "chain_high", "model_low", "model_high", "swap", "probe")
_SWAP_FOR_SAMPLER = {"ld": "reld_exact", "sgld": None, "resgld": "resgld",
                     "m_resgld": "m_resgld", "f_resgld": "f_resgld"}


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for every random source of one seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAMS, children)}


def resolve_output_dir(config: ExperimentConfig, output_dir=None) -> Path:
    """Explicit argument, then ``$FRESGLD_OUTPUT_DIR``, then the config value."""
    if output_dir is not None:
        return Path(output_dir)
    return Path(os.environ.get(OUTPUT_DIR_ENV) or config.output_dir)


def build_target(config: ExperimentConfig):
    p = config.target_params
    if config.target == "mixture":
        return GaussianMixture(**{k: p[k] for k in ("weights", "means", "sds") if k in p})
    if config.target == "quadratic":
        return Quadratic(p.get("m", 1.0), p.get("dim", 1))
    params = HeatModelParams(x0_true=tuple(p.get("x0_true", (0.5, 0.5))))
    return PdePosterior(params, obs_sd=p.get("obs_sd", 0.1))


def build_noise(config: ExperimentConfig, base) -> tuple[NoiseSpec, NoiseSpec]:
    n = config.noise
    if n.kind == "mixture_state_dependent":
        spec = mixture_state_dependent_noise(base)
        return spec, spec
    return tuple(NoiseSpec.constant(base.dim, n.energy_sd[c], n.gradient_sd[c]) for c in (0, 1))


def build_variance(config: ExperimentConfig, noise: tuple[NoiseSpec, NoiseSpec], dim: int):
    v = config.variance_estimator
    if v.kind == "known":
        return KnownVariance(noise[0]), KnownVariance(noise[1])
    if v.kind == "running_constant":
        return RunningVariance(dim, v.n_draws), RunningVariance(dim, v.n_draws)
    kw = dict(n_train=v.n_train, bandwidth=v.bandwidth, ridge=v.ridge, n_draws=v.n_draws)
    if noise[0] is noise[1]:
        # same estimator noise in both chains: fit once on the high chain
        shared = KernelRidgeVariance(dim, source_chain=1, **kw)
        return shared, shared
    return KernelRidgeVariance(dim, source_chain=0, **kw), KernelRidgeVariance(dim, source_chain=1, **kw)


def tempered_quantile(model, tau: float, lo: float = -30.0, hi: float = 30.0, n: int = 200_001):
    """Quantile function of ``exp(-U / tau)`` on the line from a fine-grid CDF."""
    x = np.linspace(lo, hi, n)
    logp = -model.energy(x[:, None]) / tau
    w = np.exp(logp - logp.max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    return lambda u: np.interp(u, cdf, x)


def w2_to_truth(config: ExperimentConfig, base, samples: np.ndarray) -> float:
    """W2 from the retained low-temperature samples to the tempered target."""
    tau = config.temperatures[0]
    if config.target == "mixture":
        q = mixture_quantile(base) if tau == 1.0 else tempered_quantile(base, tau)
        return wasserstein2_vs_target(samples[:, 0], q)
    if config.target == "quadratic":
        sd = math.sqrt(tau / base.m)
        if base.dim == 1:
            return wasserstein2_vs_target(samples[:, 0], gaussian_quantile(0.0, sd))
        # Gaussian fit to the samples against the Gaussian target
        return wasserstein2_gaussian(samples.mean(0), np.cov(samples, rowvar=False),
                                     np.zeros(base.dim), sd**2 * np.eye(base.dim))
    return float("nan")


def _initial_positions(config: ExperimentConfig, rng: np.random.Generator, batch: tuple = ()):
    shape = batch + (config.dim,)
    if config.init is not None:
        return [np.broadcast_to(np.asarray(x, dtype=float).reshape(config.dim), shape).copy()
                for x in config.init]
    if config.target == "pde":
        return [rng.uniform(0.0, 1.0, shape) for _ in range(2)]
    return [rng.standard_normal(shape) for _ in range(2)]


def _setup(config: ExperimentConfig, seed: int, batch: tuple = ()):
    """Target, noisy models, estimators and the replica pair for one seed."""
    streams = seed_streams(seed)
    base = build_target(config)
    noise = build_noise(config, base)
    models = (NoisyEnergyModel(base, noise[0], streams["model_low"]),
              NoisyEnergyModel(base, noise[1], streams["model_high"]))
    variance = build_variance(config, noise, base.dim)
    x_lo, x_hi = _initial_positions(config, streams["init"], batch)
    tau1, tau2 = config.temperatures
    kind = _SWAP_FOR_SAMPLER[config.sampler]
    rule = None if kind is None else SwapRule(kind, config.swap.a, config.swap.a1, config.swap.a2,
                                              variance_source=variance)
    pair = ReplicaPair(ChainState(x_lo, tau1, streams["chain_low"]),
                       ChainState(x_hi, tau2, streams["chain_high"]), rule, streams["swap"])
    if isinstance(config.eta, list):
        schedule = StepSchedule.sequence(config.eta)
    else:
        schedule = StepSchedule.constant(config.eta)
    return base, models, variance, pair, schedule, streams["probe"]


def _boundary(config: ExperimentConfig):
    return reflect_unit_square if config.boundary == "reflect_unit_square" else None


@dataclass
class SeedResult:
    seed: int
    metrics: dict
    samples: np.ndarray | None = None
    trace: object = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_seed(config: ExperimentConfig, seed: int, keep_trace: bool = True) -> SeedResult:
    """One replica-exchange run; sampler failures are captured, not raised."""
    base, models, variance, pair, schedule, probe = _setup(config, seed)
    try:
        trace = run_replica_exchange(pair, models, variance, schedule, config.n_steps,
                                     config.sampler, probe_rng=probe,
                                     boundary=_boundary(config), clamp_noise=config.clamp_noise)
    except (StepTooLarge, NonFiniteGradient) as err:
        log.error("seed %d failed: %s", seed, err)
        return SeedResult(seed, {"seed": seed, "error": str(err)}, error=str(err))

    samples = trace.positions[config.retained_indices(), 0]
    summary = swap_summary(trace, w2_to_truth(config, base, samples), len(samples))
    metrics = {"seed": seed, "error": None, **json.loads(summary.to_json()),
               "swap_attempts": trace.swap_attempts, "swap_accepts": trace.swap_accepts,
               "n_energy_evals": models[0].n_energy_evals + models[1].n_energy_evals,
               "n_gradient_evals": models[0].n_gradient_evals + models[1].n_gradient_evals}
    if config.target == "pde":
        iq = iqoi_metrics(samples, base.params, arm=config.name)
        metrics.update(annulus_coverage=iq.annulus_coverage,
                       angular_bins_occupied=iq.angular_bins_occupied, r_star=iq.r_star)
    return SeedResult(seed, metrics, samples, trace if keep_trace else None)


@dataclass
class EnsembleResult:
    """Independent replica pairs advanced together, one per ensemble member.

    ``samples`` has shape ``(n_retained, n_members, p)``; per-member metrics
    are arrays of length ``n_members``.
    """

    config: ExperimentConfig
    seed: int
    samples: np.ndarray
    w2_to_truth: np.ndarray
    swap_acceptance_rate: np.ndarray
    n_energy_evals: int
    n_gradient_evals: int


def run_ensemble(config: ExperimentConfig, n_members: int | None = None, seed: int = 0) -> EnsembleResult:
    """Run ``n_members`` independent copies of the experiment as one vectorized ensemble.

    Statistically this matches ``n_members`` separate seeds at a fraction of
    the cost; the random streams differ, so outputs are not comparable
    draw-for-draw with ``run_seed``.  ``n_members`` defaults to the number of
    configured seeds.  Sampler errors propagate.
    """
    n = len(config.seeds) if n_members is None else int(n_members)
    base, models, variance, pair, schedule, probe = _setup(config, seed, (n,))
    keep = config.retained_indices()
    slot = {int(k): i for i, k in enumerate(keep)}
    samples = np.empty((len(keep), n, config.dim))
    accepts = np.zeros(n)

    def collect(k, p):
        nonlocal accepts
        if p.last_event is not None:  # one attempt per step
            accepts = accepts + p.last_event.swapped
        if k in slot:
            samples[slot[k]] = p.low.position

    run_replica_exchange(pair, models, variance, schedule, config.n_steps, config.sampler,
                         probe_rng=probe, boundary=_boundary(config),
                         clamp_noise=config.clamp_noise, record=False, callback=collect)
    w2 = np.array([w2_to_truth(config, base, samples[:, i]) for i in range(n)])
    return EnsembleResult(config, seed, samples, w2, accepts / config.n_steps,
                          models[0].n_energy_evals + models[1].n_energy_evals,
                          models[0].n_gradient_evals + models[1].n_gradient_evals)


def _mean_sd(values) -> dict:
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"mean": float("nan"), "sd": float("nan"), "n": 0}
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return {"mean": float(np.mean(v)), "sd": sd, "n": int(v.size)}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seeds: list[SeedResult]
    output_dir: Path | None = None
    aggregate: dict = field(default_factory=dict)

    @property
    def failed(self) -> list[int]:
        return [r.seed for r in self.seeds if not r.ok]

    def metric(self, name: str) -> dict[int, float]:
        return {r.seed: r.metrics[name] for r in self.seeds if r.ok}


def _aggregate(results: list[SeedResult]) -> dict:
    ok = [r.metrics for r in results if r.ok]
    agg = {"n_seeds": len(results), "n_failed": len(results) - len(ok),
           "failed_seeds": [r.seed for r in results if not r.ok]}
    for name in ("w2_to_truth", "swap_acceptance_rate", "annulus_coverage", "angular_bins_occupied"):
        if ok and name in ok[0]:
            agg[name] = _mean_sd(m[name] for m in ok)
    return agg


def _write_seed(out: Path, config: ExperimentConfig, res: SeedResult) -> None:
    d = out / f"seed_{res.seed:04d}"
    d.mkdir(parents=True, exist_ok=True)
    (d / "metrics.json").write_text(json.dumps(res.metrics, indent=2, sort_keys=True) + "\n")
    if not res.ok:
        return
    if config.write_trace and res.trace is not None:
        res.trace.to_csv(d / "trace.csv")
    cols = ",".join(f"theta_{i}" for i in range(res.samples.shape[1]))
    np.savetxt(d / "samples.csv", res.samples, delimiter=",", header=cols, comments="", fmt="%.17g")
    if res.samples.shape[1] == 1:
        kde(res.samples[:, 0]).to_csv(d / "kde.csv")


def gnuplot_script(config: ExperimentConfig, seeds) -> str:
    """Plot every seed's density estimate on one set of axes."""
    lines = ["set datafile separator ','", "set key off",
             f"set title '{config.name}: low-temperature density'",
             "set xlabel 'theta'", "set ylabel 'density'"]
    plots = [f"'seed_{s:04d}/kde.csv' every ::1 using 1:2 with lines lc rgb '#4060a0'"
             for s in seeds]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def run_experiment(config: ExperimentConfig, output_dir=None, write: bool = True) -> ExperimentResult:
    """Run every seed, write per-seed outputs and an aggregate summary."""
    out = resolve_output_dir(config, output_dir) if write else None
    keep = write and config.write_trace
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(lambda s: run_seed(config, s, keep), config.seeds))
    else:
        results = [run_seed(config, s, keep) for s in config.seeds]
    result = ExperimentResult(config, results, out, _aggregate(results))
    if write:
        out.mkdir(parents=True, exist_ok=True)
        config.save(out / "config.json")
        for res in results:
            _write_seed(out, config, res)
            res.trace = None  # traces are on disk; free the memory
        (out / "summary.json").write_text(json.dumps(result.aggregate, indent=2, sort_keys=True) + "\n")
        if config.emit_gnuplot and config.dim == 1:
            ok = [r.seed for r in results if r.ok]
            (out / "plot.gp").write_text(gnuplot_script(config, ok))
    return result


def _score(result: ExperimentResult) -> tuple:
    """Sort key, smaller is better."""
    a = result.aggregate
    if result.config.target == "pde":
        return (-a.get("angular_bins_occupied", {}).get("mean", 0.0),
                -a.get("annulus_coverage", {}).get("mean", 0.0))
    w = a.get("w2_to_truth", {}).get("mean", float("nan"))
    return (w if np.isfinite(w) else float("inf"),)


@dataclass
class Comparison:
    results: list[ExperimentResult]
    ranking: list[str]
    paired_differences: dict[str, dict[int, float]]
    metric: str

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "ranking": self.ranking,
            "aggregate": {r.config.name: r.aggregate for r in self.results},
            "paired_differences": {k: {str(s): d for s, d in v.items()}
                                   for k, v in self.paired_differences.items()},
        }


def compare(configs: list[ExperimentConfig], output_dir=None, write: bool = True) -> Comparison:
    """Run several variants on a shared target and seed list and rank them.

    Variants are ranked by mean W2 to the target (PDE runs by angular then
    annulus coverage).  Paired differences are per-seed metric differences
    against the first variant.
    """
    if len(configs) < 2:
        raise ValueError("compare needs at least two configs")
    first = configs[0]
    for c in configs[1:]:
        if c.target != first.target or c.seeds != first.seeds:
            raise ValueError("compared configs must share target and seeds")
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ValueError("compared configs need distinct names")
    root = resolve_output_dir(first, output_dir).parent / "compare" if output_dir is None \
        else Path(output_dir)
    results = [run_experiment(c, root / c.name if write else None, write=write) for c in configs]
    metric = "annulus_coverage" if first.target == "pde" else "w2_to_truth"
    ranking = [r.config.name for r in sorted(results, key=_score)]
    ref = results[0].metric(metric)
    diffs = {}
    for r in results[1:]:
        mine = r.metric(metric)
        diffs[r.config.name] = {s: mine[s] - ref[s] for s in ref if s in mine}
    cmp = Comparison(results, ranking, diffs, metric)
    if write:
        root.mkdir(parents=True, exist_ok=True)
        (root / "comparison.json").write_text(json.dumps(cmp.to_dict(), indent=2) + "\n")
    return cmp
