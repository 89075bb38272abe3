"""Experiment configuration: profiles, TOML files, CLI overrides.

Precedence, highest first: CLI flags, config file, profile defaults,
dataclass defaults. The file grammar is a single TOML document with
optional tables [simulation], [forcing], [experiment]; every key is
optional and unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

try:
    import tomllib as _toml
except ImportError:  # Python 3.10
    import tomli as _toml

from ..dynamics import SimParams
from ..forcing import ForcingConfig, ForcingError

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "EXPERIMENT_KINDS",
    "PROFILES",
    "load_config",
]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


EXPERIMENT_KINDS = (
    "moment-growth",
    "exp-moment",
    "smoothing",
    "cont-dependence",
    "control-decay",
    "irreducibility",
    "inequalities",
)

# grid, time step, and ensemble size presets
PROFILES: Dict[str, Dict[str, object]] = {
    "desk": {"n": 128, "dt": 1e-3, "paths": 32},
    "large": {"n": 256, "dt": 1e-3, "paths": 128},
}

# default horizons; anything long enough to show the fitted behavior
_DEFAULT_T = {
    "moment-growth": 20.0,
    "smoothing": 20.0,
    "exp-moment": 10.0,
    "cont-dependence": 2.0,
    "control-decay": 20.0,
    "irreducibility": 40.0,
    "inequalities": 1.0,
}

_NEEDS_FORCING = {"moment-growth", "smoothing", "exp-moment", "irreducibility"}


@dataclass
class ExperimentConfig:
    """Everything one experiment needs, with the full default story."""

    kind: str
    sim: SimParams
    forcing: Optional[ForcingConfig]
    paths: int = 32
    out_dir: str = "results"
    record_every: int = 100
    workers: int = 1
    profile: str = "desk"
    plots: bool = False
    # smoothing schedule
    m: float = 1.0
    T_m: float = 0.5
    q: float = 2.0
    # exponential moments
    p: int = 4
    kappa_multiplier: float = 0.5
    # continuous dependence
    h_sweep: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    # control decay
    N_sweep: Tuple[int, ...] = (2, 4, 8)
    n_directions: int = 8
    # irreducibility
    eps_noise: Tuple[float, ...] = (1.0, 0.25, 0.0625)
    R: float = 5.0
    eta: float = 0.1
    # inequalities
    ps: Tuple[int, ...] = (4, 6, 8)
    poincare_cases: int = 200
    eps: float = 0.25
    # initial data
    init_amplitude: float = 1.0

    def validate(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.paths < 1:
            raise ConfigError(f"ensemble size must be >= 1, got {self.paths}")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        cutoff = self.sim.grid.dealias_cutoff
        if self.forcing is not None and self.forcing.max_mode > cutoff:
            raise ConfigError(
                f"forced mode {self.forcing.max_mode} exceeds grid cutoff "
                f"{cutoff}"
            )
        if self.kind in _NEEDS_FORCING and self.forcing is None:
            raise ConfigError(f"{self.kind} needs a forcing configuration")
        if self.kind in ("moment-growth", "smoothing", "cont-dependence"):
            if self.m < 0 or self.T_m <= 0:
                raise ConfigError("schedule needs m >= 0 and T_m > 0")
            if self.q < 2:
                raise ConfigError(f"moment exponent q must be >= 2, got {self.q}")
            if self.T_m > self.sim.T:
                raise ConfigError(
                    f"ramp time T_m={self.T_m} exceeds horizon T={self.sim.T}"
                )
        if self.kind == "exp-moment":
            if not 0.0 < self.sim.gamma < 2.0:
                raise ConfigError(
                    "exp-moment needs gamma in (0, 2) for the budget constant"
                )
            if self.p < 2:
                raise ConfigError(f"p must be >= 2, got {self.p}")
            if not 0.0 < self.kappa_multiplier <= 1.0:
                raise ConfigError("kappa_multiplier must lie in (0, 1]")
        if self.kind == "cont-dependence":
            if not self.h_sweep or any(h <= 0 for h in self.h_sweep):
                raise ConfigError("h_sweep must be nonempty and positive")
        if self.kind == "control-decay":
            if not self.N_sweep or any(N < 1 for N in self.N_sweep):
                raise ConfigError("N_sweep must be nonempty with N >= 1")
            if max(self.N_sweep) > cutoff:
                raise ConfigError(
                    f"damping cutoff {max(self.N_sweep)} exceeds grid cutoff "
                    f"{cutoff}"
                )
            if self.n_directions < 1:
                raise ConfigError("need at least one perturbation direction")
        if self.kind == "irreducibility":
            if self.R < 0:
                raise ConfigError(f"initial radius R must be >= 0, got {self.R}")
            if not 0.0 < self.eta < 1.0:
                raise ConfigError(f"target ball fraction eta must lie in (0, 1)")
            # eps = 0 is allowed: it runs the noiseless shifted system
            if not self.eps_noise or any(e < 0 for e in self.eps_noise):
                raise ConfigError("eps_noise sweep must be nonempty and >= 0")
            if not 0.0 < self.sim.gamma < 2.0:
                raise ConfigError(
                    "irreducibility needs gamma in (0, 2) for the rate target"
                )
        if self.kind == "inequalities":
            for p in self.ps:
                if p < 4 or p % 2:
                    raise ConfigError(f"scalar-inequality p must be even >= 4, got {p}")
            if self.poincare_cases < 1:
                raise ConfigError("poincare_cases must be >= 1")
            if not 0.0 < self.eps < 1.0:
                raise ConfigError(f"commutator eps must lie in (0, 1), got {self.eps}")

    def to_dict(self) -> dict:
        sim = {
            "gamma": self.sim.gamma,
            "r": self.sim.r,
            "n": self.sim.n,
            "dt": self.sim.dt,
            "dealias": self.sim.dealias,
            "seed": self.sim.seed,
            "T": self.sim.T,
            "blowup_bound": self.sim.blowup_bound,
        }
        experiment = {}
        for f in fields(self):
            if f.name in ("kind", "sim", "forcing", "paths", "out_dir",
                          "record_every", "workers", "profile", "plots"):
                continue
            v = getattr(self, f.name)
            experiment[f.name] = list(v) if isinstance(v, tuple) else v
        return {
            "kind": self.kind,
            "profile": self.profile,
            "paths": self.paths,
            "out": self.out_dir,
            "record_every": self.record_every,
            "workers": self.workers,
            "plots": self.plots,
            "simulation": sim,
            "forcing": None if self.forcing is None else self.forcing.to_dict(),
            "experiment": experiment,
        }


_TOP_KEYS = {"kind", "profile", "seed", "paths", "out", "workers",
             "record_every", "plots"}
_SIM_KEYS = {"n", "gamma", "dt", "T", "r", "dealias", "blowup_bound"}
_FORCING_KEYS = {"n_force", "decay", "amplitude", "modes", "amplitudes", "none"}
_EXPERIMENT_KEYS = {
    "m", "T_m", "q", "p", "kappa_multiplier", "h_sweep", "N_sweep",
    "n_directions", "eps_noise", "R", "eta", "ps", "poincare_cases", "eps",
    "init_amplitude",
}


def _read_toml(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            return _toml.load(fh)
    except _toml.TOMLDecodeError as e:
        raise ConfigError(f"malformed config {p}: {e}") from e


def _check_keys(table: Mapping, allowed: set, where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def load_config(path=None, kind: Optional[str] = None,
                overrides: Optional[Mapping[str, object]] = None
                ) -> ExperimentConfig:
    """Assemble an ExperimentConfig from file + CLI overrides.

    `kind` (the CLI subcommand) wins over a kind key in the file. Raises
    ConfigError for anything malformed or inconsistent.
    """
    overrides = dict(overrides or {})
    bad = set(overrides) - _TOP_KEYS - _SIM_KEYS - _EXPERIMENT_KEYS
    if bad:
        raise ConfigError(f"unknown override keys: {sorted(bad)}")
    data = _read_toml(path) if path is not None else {}
    top = {k: v for k, v in data.items() if not isinstance(v, dict)}
    _check_keys(top, _TOP_KEYS, "top-level")
    _check_keys({k: v for k, v in data.items() if isinstance(v, dict)},
                {"simulation", "forcing", "experiment"}, "section")

    kind = kind or data.get("kind")
    if kind is None:
        raise ConfigError("no experiment kind given (subcommand or kind = ...)")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")

    profile = overrides.get("profile") or data.get("profile") or "desk"
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    prof = PROFILES[profile]

    sim_tbl = dict(data.get("simulation", {}))
    _check_keys(sim_tbl, _SIM_KEYS, "[simulation]")
    for key in _SIM_KEYS & set(overrides):
        sim_tbl[key] = overrides[key]
    try:
        sim = SimParams(
            gamma=float(sim_tbl.get("gamma", 1.0)),
            r=float(sim_tbl.get("r", 2.5)),
            n=int(sim_tbl.get("n", prof["n"])),
            dt=float(sim_tbl.get("dt", prof["dt"])),
            dealias=bool(sim_tbl.get("dealias", True)),
            seed=int(overrides.get("seed", data.get("seed", 0))),
            T=float(sim_tbl.get("T", _DEFAULT_T[kind])),
            blowup_bound=float(sim_tbl.get("blowup_bound", 1e6)),
        )
    except ValueError as e:
        raise ConfigError(f"bad simulation parameters: {e}") from e

    forcing_tbl = dict(data.get("forcing", {}))
    _check_keys(forcing_tbl, _FORCING_KEYS, "[forcing]")
    if forcing_tbl.get("none"):
        forcing = None
    elif forcing_tbl:
        try:
            forcing = ForcingConfig.from_dict(forcing_tbl)
        except (ForcingError, KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad forcing table: {e}") from e
    elif kind == "inequalities":
        forcing = None
    else:
        forcing = ForcingConfig.ball(4, decay=1.0, amplitude=0.3)

    exp_tbl = dict(data.get("experiment", {}))
    _check_keys(exp_tbl, _EXPERIMENT_KEYS, "[experiment]")
    for key in _EXPERIMENT_KEYS & set(overrides):
        exp_tbl[key] = overrides[key]
    kw: Dict[str, object] = {}
    try:
        for key in ("m", "T_m", "q", "kappa_multiplier", "R", "eta", "eps",
                    "init_amplitude"):
            if key in exp_tbl:
                kw[key] = float(exp_tbl[key])
        for key in ("p", "n_directions", "poincare_cases"):
            if key in exp_tbl:
                kw[key] = int(exp_tbl[key])
        if "h_sweep" in exp_tbl:
            kw["h_sweep"] = tuple(float(h) for h in exp_tbl["h_sweep"])
        if "eps_noise" in exp_tbl:
            kw["eps_noise"] = tuple(float(e) for e in exp_tbl["eps_noise"])
        if "N_sweep" in exp_tbl:
            kw["N_sweep"] = tuple(int(N) for N in exp_tbl["N_sweep"])
        if "ps" in exp_tbl:
            kw["ps"] = tuple(int(p) for p in exp_tbl["ps"])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad [experiment] value: {e}") from e

    cfg = ExperimentConfig(
        kind=kind,
        sim=sim,
        forcing=forcing,
        paths=int(overrides.get("paths", data.get("paths", prof["paths"]))),
        out_dir=str(overrides.get("out", data.get("out", "results"))),
        record_every=int(overrides.get("record_every",
                                       data.get("record_every", 100))),
        workers=int(overrides.get("workers", data.get("workers", 1))),
        profile=profile,
        plots=bool(overrides.get("plots", data.get("plots", False))),
        **kw,
    )
    cfg.validate()
    return cfg
