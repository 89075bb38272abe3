"""Trajectory recording and the estimators that turn runs into checks.

Covers the smoothing ramp alpha(t), per-trajectory moment series with CSV
and JSON output, exponential-moment estimators guarded by the kappa
smallness budget, log-linear decay fitting, and the two-seed time-average
diagnostic for unique ergodicity.

Estimators are pure folds over per-trajectory records: recomputing ensemble
statistics from a stored CSV reproduces them bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .forcing import ForcingConfig, sigma_lp_norm
from .spectral import SpectralField, sobolev_norm

__all__ = [
    "SmoothingSchedule",
    "MomentSeries",
    "KappaBudget",
    "BudgetError",
    "EstimatorResult",
    "DecayFit",
    "TimeAverageReport",
    "ResolutionWarning",
    "alpha_at",
    "bootstrap_exponent",
    "record_smoothing_moments",
    "exp_moment_estimator",
    "exp_time_integral_estimator",
    "kappa_zero",
    "fit_decay_rate",
    "fit_log_slope",
    "default_fit_window",
    "time_average_diagnostic",
    "bounded_functionals",
    "band_energy",
    "running_integral",
]


class ResolutionWarning(UserWarning):
    """High-order norms requested on a field with an unresolved tail."""


class BudgetError(ValueError):
    """kappa outside the smallness budget the estimate is claimed for."""


@dataclass(frozen=True)
class SmoothingSchedule:
    """Linear ramp alpha(t) = m t / T_m for t <= T_m, then the constant m."""

    m: float
    T_m: float

    def __post_init__(self):
        if self.m < 0:
            raise ValueError(f"derivative gain must be >= 0, got {self.m}")
        if self.T_m <= 0:
            raise ValueError(f"ramp time must be positive, got {self.T_m}")

    def __call__(self, t: float) -> float:
        return alpha_at(self, t)


def alpha_at(sched: SmoothingSchedule, t: float) -> float:
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    if t >= sched.T_m:
        return sched.m
    return sched.m * t / sched.T_m


def bootstrap_exponent(r: float, gamma: float, t: float) -> float:
    """Control-equation bootstrap index s(t) = r - 1 + t gamma, capped at r.

    The cap is reached at T = 1/gamma, the same waiting time decay fits
    skip by default.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return r - 1.0 + alpha_at(SmoothingSchedule(1.0, 1.0 / gamma), t)


@dataclass
class MomentSeries:
    """Per-trajectory samples of one scalar observable over shared times."""

    name: str
    times: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("times must be a nonempty 1-d array")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.values.shape[1] != self.times.size:
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{self.times.size} sample times"
            )

    @property
    def n_trajectories(self) -> int:
        return self.values.shape[0]

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def stderr(self) -> np.ndarray:
        n = self.n_trajectories
        if n < 2:
            return np.zeros(self.times.size)
        return self.values.std(axis=0, ddof=1) / math.sqrt(n)

    def to_csv(self, path) -> None:
        """Columns t, trajectory_id, value; repr floats so parsing is exact."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "trajectory_id", "value"])
            for tid in range(self.n_trajectories):
                for t, v in zip(self.times, self.values[tid]):
                    writer.writerow([repr(float(t)), tid, repr(float(v))])

    @classmethod
    def from_csv(cls, path, name: str = "", metadata: Optional[dict] = None
                 ) -> "MomentSeries":
        rows: Dict[int, List[Tuple[float, float]]] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["t", "trajectory_id", "value"]:
                raise ValueError(f"unexpected CSV header {header}")
            for t, tid, v in reader:
                rows.setdefault(int(tid), []).append((float(t), float(v)))
        if not rows:
            raise ValueError("empty series file")
        ids = sorted(rows)
        times = np.array([t for t, _ in rows[ids[0]]])
        values = np.empty((len(ids), times.size))
        for i, tid in enumerate(ids):
            traj = rows[tid]
            if len(traj) != times.size or any(
                a != b for (a, _), b in zip(traj, times)
            ):
                raise ValueError(f"trajectory {tid} has mismatched sample times")
            values[i] = [v for _, v in traj]
        return cls(name=name, times=times, values=values,
                   metadata=metadata or {})

    def summary(self) -> dict:
        return {
            "name": self.name,
            "n_trajectories": self.n_trajectories,
            "times": self.times.tolist(),
            "mean": self.mean().tolist(),
            "stderr": self.stderr().tolist(),
            "metadata": self.metadata,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class KappaBudget:
    """Exponential-moment coefficient and the smallness condition it obeys.

    The estimate is claimed only for kappa (1 + C_gamma ||sigma||_{L^p}^2)
    <= 1/2; validate() enforces it before any estimator runs.
    """

    p: float
    kappa: float
    c_gamma: float
    sigma_lp: float

    def slack(self) -> float:
        return 0.5 - self.kappa * (1.0 + self.c_gamma * self.sigma_lp**2)

    def validate(self) -> None:
        if self.kappa < 0:
            raise BudgetError(f"kappa must be >= 0, got {self.kappa}")
        if self.slack() < -1e-12:
            raise BudgetError(
                f"kappa={self.kappa:.6g} violates the smallness budget: "
                f"kappa (1 + C ||sigma||^2) = {0.5 - self.slack():.6g} > 1/2"
            )

    def scaled(self, factor: float) -> "KappaBudget":
        return KappaBudget(self.p, self.kappa * factor, self.c_gamma,
                           self.sigma_lp)


def kappa_zero(p: float, cfg: Optional[ForcingConfig], gamma: float,
               c_gamma: Optional[float] = None,
               sigma_lp: Optional[float] = None) -> KappaBudget:
    """Largest kappa with kappa (1 + C_gamma ||sigma||_{L^p}^2) <= 1/2.

    cfg=None (or sigma_lp=0) means no forcing and gives kappa_0 = 1/2.
    c_gamma/sigma_lp accept precomputed overrides.
    """
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    if c_gamma is None:
        from .inequalities import poincare_constant

        c_gamma = poincare_constant(2, gamma, p if p > 2 else None)
    if sigma_lp is None:
        sigma_lp = sigma_lp_norm(cfg, p) if cfg is not None else 0.0
    kappa = 0.5 / (1.0 + c_gamma * sigma_lp**2)
    return KappaBudget(p=p, kappa=kappa, c_gamma=c_gamma, sigma_lp=sigma_lp)


@dataclass(frozen=True)
class EstimatorResult:
    """Monte Carlo mean with a bootstrap confidence interval."""

    mean: float
    ci_low: float
    ci_high: float
    n_samples: int
    heavy_tail: bool

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low


def _bootstrap_mean(samples: np.ndarray, boot_seed: int,
                    n_boot: int = 1000) -> EstimatorResult:
    mean = float(samples.mean())
    if samples.size < 2:
        return EstimatorResult(mean, mean, mean, samples.size, False)
    rng = np.random.default_rng(boot_seed)
    idx = rng.integers(0, samples.size, size=(n_boot, samples.size))
    boots = samples[idx].mean(axis=1)
    lo, hi = np.percentile(boots, [2.5, 97.5])
    heavy = (hi - lo) > abs(mean)
    return EstimatorResult(mean, float(lo), float(hi), samples.size, heavy)


def exp_moment_estimator(lp_norms: Sequence[float], budget: KappaBudget,
                         boot_seed: int = 0) -> EstimatorResult:
    """Mean of exp(kappa ||w(T)||_{L^p}^2) over an ensemble.

    Refuses kappa outside the budget: the moment bound only holds in that
    range and extrapolated failures would be uninterpretable.
    """
    budget.validate()
    vals = np.asarray(lp_norms, dtype=np.float64)
    return _bootstrap_mean(np.exp(budget.kappa * vals**2), boot_seed)


def exp_time_integral_estimator(integrals: Sequence[float],
                                budget: KappaBudget,
                                boot_seed: int = 0) -> EstimatorResult:
    """Mean of exp(kappa int_0^T ||w||_{L^p}^2 ds) over an ensemble."""
    budget.validate()
    vals = np.asarray(integrals, dtype=np.float64)
    return _bootstrap_mean(np.exp(budget.kappa * vals), boot_seed)


def running_integral(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Cumulative trapezoid of values(t), zero at the first sample."""
    t = np.asarray(times, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    inc = 0.5 * (y[..., 1:] + y[..., :-1]) * np.diff(t)
    out = np.zeros(y.shape)
    out[..., 1:] = np.cumsum(inc, axis=-1)
    return out


def _tail_fraction(f: SpectralField, s: float) -> float:
    g = f.grid
    k = np.where(g.k_sq > 0, g.k_abs, 1.0)
    weight = np.where(g.k_sq > 0, k ** (2.0 * s), 0.0)
    mass = weight * g.parseval_weight * np.abs(f.coeffs) ** 2
    total = float(mass.sum())
    if total == 0.0:
        return 0.0
    band = np.maximum(np.abs(g.kk1), g.kk2)
    tail = float(mass[band > 0.8 * g.dealias_cutoff].sum())
    return tail / total


def record_smoothing_moments(
    trajectories: Iterable[Iterable[Tuple[float, SpectralField]]],
    sched: SmoothingSchedule,
    r: float,
    q: float,
    gamma: float,
    metadata: Optional[dict] = None,
    tail_tol: float = 1e-8,
) -> Tuple[MomentSeries, MomentSeries]:
    """Running sup of ||L^{r+a(t)} w||^q and its dissipation integral.

    Returns the pair (sup series, integral series). The sup is over the
    recorded sample times, a lower bound on the continuous sup. The
    integral int ||L^{r+g/2+a}w||^2 ||L^{r+a}w||^{q-2} ds uses the
    trapezoid rule on the same samples. Warns when the highest-order norm
    has more than tail_tol of its mass near the grid cutoff.
    """
    sup_rows: List[np.ndarray] = []
    int_rows: List[np.ndarray] = []
    times_ref: Optional[np.ndarray] = None
    warned = False
    for traj in trajectories:
        ts: List[float] = []
        sups: List[float] = []
        dens: List[float] = []
        best = -math.inf
        for t, omega in traj:
            a = alpha_at(sched, t)
            v = sobolev_norm(omega, r + a)
            best = max(best, v**q)
            ts.append(t)
            sups.append(best)
            dens.append(sobolev_norm(omega, r + gamma / 2.0 + a) ** 2
                        * v ** (q - 2.0))
            if not warned and _tail_fraction(omega, r + sched.m + gamma / 2.0) > tail_tol:
                warnings.warn(
                    f"spectral tail above {tail_tol:.0e} of the "
                    f"H^{r + sched.m + gamma / 2.0:g} mass; norms unreliable",
                    ResolutionWarning,
                    stacklevel=2,
                )
                warned = True
        tarr = np.asarray(ts)
        if times_ref is None:
            times_ref = tarr
        elif tarr.shape != times_ref.shape or np.any(tarr != times_ref):
            raise ValueError("trajectories recorded on different time grids")
        sup_rows.append(np.asarray(sups))
        int_rows.append(running_integral(tarr, np.asarray(dens)))
    if times_ref is None:
        raise ValueError("no trajectories supplied")
    meta = dict(metadata or {})
    meta.update({"r": r, "q": q, "gamma": gamma, "m": sched.m, "T_m": sched.T_m})
    sup = MomentSeries("smoothing_sup", times_ref, np.vstack(sup_rows), meta)
    integ = MomentSeries("smoothing_dissipation_integral", times_ref,
                         np.vstack(int_rows), dict(meta))
    return sup, integ


@dataclass(frozen=True)
class DecayFit:
    """Least-squares line through log(values): values ~ e^{slope t}."""

    slope: float
    intercept: float
    r_squared: float
    window: Tuple[float, float]
    n_points: int


def default_fit_window(gamma: float, T: float) -> Tuple[float, float]:
    """Skip the bootstrap transient: start at min(1/gamma, T/2)."""
    if gamma <= 0 or T <= 0:
        raise ValueError("gamma and T must be positive")
    return (min(1.0 / gamma, 0.5 * T), T)


def fit_log_slope(times: np.ndarray, values: np.ndarray,
                  window: Optional[Tuple[float, float]] = None) -> DecayFit:
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if window is None:
        window = (float(t[0]), float(t[-1]))
    lo, hi = window
    mask = (t >= lo) & (t <= hi)
    if mask.sum() < 2:
        raise ValueError(f"window {window} selects fewer than two samples")
    t, v = t[mask], v[mask]
    if np.any(v <= 0):
        raise ValueError("decay fit needs positive values in the window")
    logv = np.log(v)
    slope, intercept = np.polyfit(t, logv, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((logv - pred) ** 2))
    ss_tot = float(np.sum((logv - logv.mean()) ** 2))
    # variance at roundoff level means a constant series: a perfect fit,
    # not a degenerate one
    noise = logv.size * (8 * np.finfo(float).eps * (1 + abs(logv.mean()))) ** 2
    r2 = 1.0 if ss_tot <= noise else 1.0 - ss_res / ss_tot
    return DecayFit(float(slope), float(intercept), r2, (float(lo), float(hi)),
                    int(mask.sum()))


def fit_decay_rate(series: MomentSeries,
                   window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """Fit the ensemble mean of a series as C e^{slope t} over the window."""
    return fit_log_slope(series.times, series.mean(), window)


@dataclass(frozen=True)
class TimeAverageReport:
    """Agreement of running time averages from two independent streams."""

    functional: str
    avg_a: float
    avg_b: float
    diff_final: float
    diff_half: float
    fluct_a: float
    fluct_b: float

    @property
    def shrinking(self) -> bool:
        return self.diff_final <= self.diff_half + 1e-12

    @property
    def agree(self) -> bool:
        # each stream's excursion over its second half window is the honest
        # scale for how converged the averages are; the net endpoint move
        # understates it (a zigzag that returns nets to zero) and would make
        # agreement a fixed-odds coin flip in the CLT regime
        return self.diff_final <= 2.0 * max(self.fluct_a, self.fluct_b) + 1e-12


def time_average_diagnostic(times: np.ndarray, values_a: np.ndarray,
                            values_b: np.ndarray,
                            functional: str = "") -> TimeAverageReport:
    """Compare running averages (1/t) int_0^t f ds of two streams.

    fluct_* is the full excursion (max minus min) of each running average
    over its second half window, not the net endpoint move.
    """
    t = np.asarray(times, dtype=np.float64)
    if t[0] < 0 or t.size < 4:
        raise ValueError("need a few samples at nonnegative times")
    span = t - t[0]

    def running_avg(vals):
        integ = running_integral(t, np.asarray(vals, dtype=np.float64))
        out = np.empty_like(integ)
        out[0] = vals[0]
        out[1:] = integ[1:] / span[1:]
        return out

    ra, rb = running_avg(values_a), running_avg(values_b)
    half = int(np.searchsorted(span, 0.5 * span[-1]))
    half = min(max(half, 1), t.size - 1)
    return TimeAverageReport(
        functional=functional,
        avg_a=float(ra[-1]),
        avg_b=float(rb[-1]),
        diff_final=float(abs(ra[-1] - rb[-1])),
        diff_half=float(abs(ra[half] - rb[half])),
        fluct_a=float(np.ptp(ra[half:])),
        fluct_b=float(np.ptp(rb[half:])),
    )


def band_energy(f: SpectralField, lo: float, hi: float) -> float:
    """Parseval mass of modes with lo <= |k| <= hi."""
    g = f.grid
    mask = (g.k_abs >= lo) & (g.k_abs <= hi) & (g.k_sq > 0)
    total = np.sum(mask * g.parseval_weight * np.abs(f.coeffs) ** 2)
    return float((2.0 * np.pi) ** 2 * total)


def bounded_functionals() -> Dict[str, Callable[[SpectralField], float]]:
    """Five bounded observables for time-average comparisons."""
    return {
        "tanh_energy": lambda f: math.tanh(sobolev_norm(f, 0.0) ** 2),
        "tanh_h1": lambda f: math.tanh(sobolev_norm(f, 1.0) ** 2),
        "tanh_band_1_2": lambda f: math.tanh(band_energy(f, 1.0, 2.0)),
        "tanh_band_3_4": lambda f: math.tanh(band_energy(f, 3.0, 4.0)),
        "tanh_sin_1_0": lambda f: math.tanh(-2.0 * f.coeffs[1, 0].imag),
    }
