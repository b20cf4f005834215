"""Experiment configuration: JSON schema, validation and named presets."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields

from .samplers import SAMPLER_KINDS

TARGETS = ("mixture", "quadratic", "pde")
NOISE_KINDS = ("constant", "mixture_state_dependent")
VARIANCE_KINDS = ("known", "running_constant", "kernel_ridge")
THINNING = ("even", "none")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass
class NoiseConfig:
    kind: str = "constant"
    energy_sd: list = field(default_factory=lambda: [0.0, 0.0])
    gradient_sd: list = field(default_factory=lambda: [0.0, 0.0])


@dataclass
class VarianceConfig:
    kind: str = "known"
    n_draws: int = 10
    n_train: int = 100
    bandwidth: float | None = None
    ridge: float = 1e-3


@dataclass
class SwapConfig:
    a: float = 1.0
    a1: float = 0.5
    a2: float = 0.5


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    target: str = "mixture"
    sampler: str = "f_resgld"
    temperatures: list = field(default_factory=lambda: [1.0, 10.0])
    eta: float | list = 0.03
    n_steps: int = 1250
    burn_in: int | None = None
    n_retained: int = 1000
    thinning: str = "none"
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    variance_estimator: VarianceConfig = field(default_factory=VarianceConfig)
    swap: SwapConfig = field(default_factory=SwapConfig)
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "runs/experiment"
    target_params: dict = field(default_factory=dict)
    init: list | None = None
    boundary: str | None = None
    clamp_noise: bool = False
    write_trace: bool = True
    emit_gnuplot: bool = False
    workers: int = 1

    @property
    def burn_in_steps(self) -> int:
        return self.n_steps // 5 if self.burn_in is None else self.burn_in

    def retained_indices(self):
        """Step indices (0-based) of the retained low-temperature samples."""
        import numpy as np

        start = self.burn_in_steps
        if self.thinning == "none":
            return np.arange(start, start + self.n_retained)
        return np.linspace(start, self.n_steps - 1, self.n_retained).round().astype(int)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        raw = copy.deepcopy(raw)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        sections = {"noise": NoiseConfig, "variance_estimator": VarianceConfig, "swap": SwapConfig}
        for key, sub in sections.items():
            if key in raw:
                val = raw[key]
                if not isinstance(val, dict):
                    raise ConfigError(key, "must be an object")
                bad = set(val) - {f.name for f in fields(sub)}
                if bad:
                    raise ConfigError(f"{key}.{sorted(bad)[0]}", "unknown field")
                raw[key] = sub(**val)
        cfg = cls(**raw)
        try:
            cfg.validate()
        except TypeError as err:
            raise ConfigError("<root>", f"wrong value type ({err})") from None
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError("<root>", f"invalid JSON ({err})") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(self.target in TARGETS, "target", f"must be one of {TARGETS}")
        need(self.sampler in SAMPLER_KINDS, "sampler", f"must be one of {SAMPLER_KINDS}")
        t = self.temperatures
        need(isinstance(t, list) and len(t) == 2, "temperatures", "must be [tau1, tau2]")
        need(all(isinstance(v, (int, float)) for v in t), "temperatures", "must be numbers")
        need(t[1] > t[0] > 0, "temperatures", "need tau2 > tau1 > 0")
        if isinstance(self.eta, list):
            need(len(self.eta) >= self.n_steps, "eta", "schedule shorter than n_steps")
            need(all(isinstance(e, (int, float)) and e > 0 for e in self.eta), "eta",
                 "step sizes must be positive")
        else:
            need(isinstance(self.eta, (int, float)) and self.eta > 0, "eta", "must be positive")
        need(isinstance(self.n_steps, int) and self.n_steps >= 1, "n_steps", "must be an integer >= 1")
        need(isinstance(self.n_retained, int) and self.n_retained >= 1, "n_retained",
             "must be an integer >= 1")
        b = self.burn_in_steps
        need(isinstance(b, int) and b >= 0, "burn_in", "must be an integer >= 0")
        need(self.n_retained <= self.n_steps - b, "n_retained", "must be <= n_steps - burn_in")
        need(self.thinning in THINNING, "thinning", f"must be one of {THINNING}")
        need(isinstance(self.seeds, list) and len(self.seeds) >= 1, "seeds", "need at least one seed")
        need(all(isinstance(s, int) and s >= 0 for s in self.seeds), "seeds",
             "seeds must be non-negative integers")
        need(len(set(self.seeds)) == len(self.seeds), "seeds", "seeds must be distinct")
        need(isinstance(self.output_dir, str) and self.output_dir, "output_dir", "must be a path")
        need(isinstance(self.workers, int) and self.workers >= 1, "workers", "must be >= 1")
        need(self.boundary in (None, "reflect_unit_square"), "boundary",
             "must be null or 'reflect_unit_square'")

        n = self.noise
        need(n.kind in NOISE_KINDS, "noise.kind", f"must be one of {NOISE_KINDS}")
        if n.kind == "constant":
            for name in ("energy_sd", "gradient_sd"):
                v = getattr(n, name)
                need(isinstance(v, list) and len(v) == 2, f"noise.{name}", "must list one value per chain")
                need(all(isinstance(x, (int, float)) and x >= 0 for x in v), f"noise.{name}",
                     "must be non-negative numbers")
        else:
            need(self.target == "mixture", "noise.kind", "state-dependent noise needs the mixture target")

        v = self.variance_estimator
        need(v.kind in VARIANCE_KINDS, "variance_estimator.kind", f"must be one of {VARIANCE_KINDS}")
        need(isinstance(v.n_draws, int) and v.n_draws >= 2, "variance_estimator.n_draws", "must be >= 2")
        need(isinstance(v.n_train, int) and v.n_train >= 1, "variance_estimator.n_train", "must be >= 1")
        need(v.bandwidth is None or v.bandwidth > 0, "variance_estimator.bandwidth", "must be positive")
        need(v.ridge > 0, "variance_estimator.ridge", "must be positive")

        s = self.swap
        need(isinstance(s.a, (int, float)) and s.a > 0, "swap.a", "must be positive")
        need(s.a1 >= 0 and s.a2 >= 0 and abs(s.a1 + s.a2 - 1.0) < 1e-12, "swap.a1",
             "need a1, a2 >= 0 with a1 + a2 = 1")

        p = self.target_params
        need(isinstance(p, dict), "target_params", "must be an object")
        if self.target == "quadratic":
            need(p.get("m", 1.0) > 0, "target_params.m", "must be positive")
            need(isinstance(p.get("dim", 1), int) and p.get("dim", 1) >= 1, "target_params.dim",
                 "must be an integer >= 1")
        if self.target == "pde":
            need(p.get("obs_sd", 0.1) > 0, "target_params.obs_sd", "must be positive")
            x0 = p.get("x0_true", [0.5, 0.5])
            need(isinstance(x0, list) and len(x0) == 2 and all(0 <= c <= 1 for c in x0),
                 "target_params.x0_true", "must be a point in the unit square")
        if self.init is not None:
            need(isinstance(self.init, list) and len(self.init) == 2, "init",
                 "must be [low_position, high_position]")

    @property
    def dim(self) -> int:
        if self.target == "mixture":
            return 1
        if self.target == "pde":
            return 2
        return int(self.target_params.get("dim", 1))


# Shared settings of the mixture experiments: swap attempted every step
# (a * eta = 1) and 1000 samples thinned evenly from 80k post-burn-in steps.
_MIXTURE_ETA = 0.03
_MIXTURE_BASE = dict(
    target="mixture", temperatures=[1.0, 10.0], eta=_MIXTURE_ETA, n_steps=100_000, burn_in=20_000,
    n_retained=1000, thinning="even", swap={"a": 1.0 / _MIXTURE_ETA}, seeds=list(range(20)),
)


def _pde_preset(arm: str) -> dict:
    from .pde import make_pde_arm

    spec = make_pde_arm(arm)
    return dict(
        name=f"paper-pde-{arm[0]}", target="pde", sampler=spec.sampler,
        temperatures=list(spec.temperatures), eta=PDE_ETA, n_steps=48_000, burn_in=0,
        n_retained=48_000, thinning="none",
        noise={"kind": "constant", "energy_sd": [spec.energy_sd] * 2,
               "gradient_sd": [spec.gradient_sd] * 2},
        variance_estimator={"kind": "known"}, swap={"a": 1.0 / PDE_ETA},
        target_params={"obs_sd": PDE_OBS_SD, "x0_true": [0.5, 0.5]},
        boundary="reflect_unit_square", seeds=[0], output_dir=f"runs/paper-pde-{arm[0]}",
        write_trace=False,
    )


PDE_ETA = 1e-4
PDE_OBS_SD = 1.0  # 0.1 makes eta = 1e-4 radially unstable (curvature ~1.7e5)

PRESETS = {
    "paper-mixture-fixed": lambda: dict(
        _MIXTURE_BASE, name="paper-mixture-fixed", sampler="f_resgld",
        noise={"kind": "constant", "energy_sd": [1.0, 3.0], "gradient_sd": [2.0, 5.0]},
        variance_estimator={"kind": "known"}, output_dir="runs/paper-mixture-fixed",
    ),
    "paper-mixture-statedep": lambda: dict(
        _MIXTURE_BASE, name="paper-mixture-statedep", sampler="f_resgld",
        noise={"kind": "mixture_state_dependent"},
        # ridge 1e-3 interpolates the chi-square noise of 10-draw variances and can
        # overshoot the admissible 2 tau / eta; a heavier ridge smooths it out
        variance_estimator={"kind": "kernel_ridge", "ridge": 1.0},
        output_dir="runs/paper-mixture-statedep",
    ),
    "paper-pde-s": lambda: _pde_preset("s_reSGLD"),
    "paper-pde-f": lambda: _pde_preset("f_reSGLD"),
    "paper-pde-l": lambda: _pde_preset("l_reSGLD"),
}


def preset(preset_name: str, /, **overrides) -> ExperimentConfig:
    """Named configuration; keyword overrides replace top-level fields."""
    if preset_name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}")
    raw = PRESETS[preset_name]()
    raw.update(overrides)
    return ExperimentConfig.from_dict(raw)
