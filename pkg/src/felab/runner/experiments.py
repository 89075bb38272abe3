"""The named experiments: ensemble orchestration, fits, and verdicts.

Every experiment is a pure function of (config, seed): trajectory noise
comes from counter-based per-trajectory streams, initial data and bootstrap
resampling from seeds derived off the root, and ensemble folds run in
trajectory-id order, so reruns reproduce every CSV byte for byte.
"""

from __future__ import annotations

import csv
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..dynamics import (
    FrozenFlow,
    SimParams,
    TrajectoryState,
    fresh_state,
    lambda_N,
    load_checkpoint,
    save_checkpoint,
    step_control,
    step_main,
    step_shifted,
)
from ..forcing import (
    ForcingConfig,
    NoiseStream,
    build_basis,
    derive_stream_seed,
    ou_exact_step,
    sigma_lp_norm,
)
from ..inequalities import (
    check_commutator,
    check_fp_scalar,
    check_poincare,
    commutator_ratio_study,
    fp_grid_violations,
    p_gamma,
    poincare_constant,
    q_exponent,
)
from ..observables import (
    BudgetError,
    MomentSeries,
    ResolutionWarning,
    SmoothingSchedule,
    bootstrap_exponent,
    default_fit_window,
    exp_moment_estimator,
    exp_time_integral_estimator,
    fit_log_slope,
    kappa_zero,
    record_smoothing_moments,
    running_integral,
)
from ..spectral import Grid2D, SpectralField, lp_norm, sobolev_norm
from .config import ExperimentConfig
from .report import ExperimentReport, Verdict, build_stamp

__all__ = [
    "EXPERIMENTS",
    "run_experiment",
    "run_moment_growth",
    "run_exp_moment",
    "run_cont_dependence",
    "run_control_decay",
    "run_irreducibility",
    "run_inequalities",
    "rough_initial_field",
    "direction_field",
    "save_checkpoint",
    "load_checkpoint",
]

# spawn-key salts keeping initial data, directions, and bootstrap draws on
# streams disjoint from the per-trajectory noise (which uses plain ids)
_SALT_INIT = 1_000_003
_SALT_DIRECTION = 2_000_003
_SALT_BOOT = 3_000_003
_SALT_CASES = 4_000_003


def _rng(root_seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(int(root_seed), spawn_key=(int(salt),))
    )


def rough_initial_field(grid: Grid2D, r: float, seed: int,
                        amplitude: float) -> SpectralField:
    """|c_k| = |k|^{-(r+1)} with iid phases up to the cutoff, H^r size set.

    The tail decays exactly at the borderline rate for H^r membership, so
    H^{r+1} mass keeps growing with resolution: rough data by construction.
    """
    if amplitude == 0.0:
        return SpectralField.zeros(grid)
    gen = _rng(seed, _SALT_INIT)
    phases = gen.uniform(0.0, 2.0 * np.pi, size=grid.k_abs.shape)
    band = np.maximum(np.abs(grid.kk1), grid.kk2)
    k = np.where(grid.k_sq > 0, grid.k_abs, 1.0)
    mag = np.where((grid.k_sq > 0) & (band <= grid.dealias_cutoff),
                   k ** (-(r + 1.0)), 0.0)
    f = SpectralField.from_coeffs(grid, mag * np.exp(1j * phases))
    return (amplitude / sobolev_norm(f, r)) * f


def direction_field(grid: Grid2D, r: float, seed: int, j: int,
                    band: Optional[int] = None) -> SpectralField:
    """Random H^r-normalized perturbation direction number j."""
    gen = _rng(seed, _SALT_DIRECTION + j)
    c = gen.standard_normal(grid.k_abs.shape) \
        + 1j * gen.standard_normal(grid.k_abs.shape)
    kband = np.maximum(np.abs(grid.kk1), grid.kk2)
    limit = grid.dealias_cutoff // 2 if band is None else band
    k = np.where(grid.k_sq > 0, grid.k_abs, 1.0)
    c *= np.where((grid.k_sq > 0) & (kband <= limit), k ** (-(r + 1.0)), 0.0)
    f = SpectralField.from_coeffs(grid, c)
    return (1.0 / sobolev_norm(f, r)) * f


def _map_trajectories(fn: Callable[[int], object], n_paths: int,
                      workers: int) -> List[object]:
    """Run fn over trajectory ids; results come back in id order."""
    if workers <= 1:
        return [fn(tid) for tid in range(n_paths)]
    results: List[object] = [None] * n_paths
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {tid: pool.submit(fn, tid) for tid in range(n_paths)}
        for tid, fut in futures.items():
            results[tid] = fut.result()
    return results


def _ic(rss: float, n: int, k: int) -> Tuple[float, float]:
    """(AIC, BIC) for a least-squares fit with k parameters."""
    base = n * math.log(max(rss, 1e-300) / n)
    return base + 2 * k, base + k * math.log(n)


def _aic_linear_vs_quadratic(times: np.ndarray, values: np.ndarray) -> dict:
    """Model selection between a + bt and a + bt + ct^2 on raw values.

    The verdict uses BIC: with AIC's fixed +2 penalty a genuinely linear
    noisy series selects the quadratic about 16% of the time (chi-square
    tail above 2), which would turn the growth verdicts into coin flips.
    Both scores are reported.
    """
    t = np.asarray(times, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    lin = np.polyfit(t, y, 1)
    quad = np.polyfit(t, y, 2)
    rss_lin = float(np.sum((y - np.polyval(lin, t)) ** 2))
    rss_quad = float(np.sum((y - np.polyval(quad, t)) ** 2))
    aic_lin, bic_lin = _ic(rss_lin, y.size, 2)
    aic_quad, bic_quad = _ic(rss_quad, y.size, 3)
    preferred = "linear" if bic_lin <= bic_quad else "quadratic"
    curvature = float(quad[0])
    # total effect of the quadratic term across the window, against the
    # series magnitude; on a flat series the BIC comparison is noise-floor
    # arithmetic and the sign of a ~1e-7 curvature is meaningless
    quad_contribution = abs(curvature) * float(t[-1] - t[0]) ** 2
    scale = float(np.max(np.abs(y))) or 1.0
    negligible = quad_contribution <= 1e-3 * scale
    return {
        "aic_linear": aic_lin,
        "aic_quadratic": aic_quad,
        "bic_linear": bic_lin,
        "bic_quadratic": bic_quad,
        "rss_linear": rss_lin,
        "rss_quadratic": rss_quad,
        "curvature": curvature,
        "quad_contribution": quad_contribution,
        "preferred": preferred,
        # saturating series are concave: the quadratic wins the selection
        # with negative curvature, which still certifies at-most-linear
        # growth; only a materially upward-curving winner refutes the
        # envelope
        "sub_quadratic": preferred == "linear" or curvature <= 0.0
        or negligible,
    }


def _write_series(series: MomentSeries, out: Path) -> str:
    path = out / f"{series.name}.csv"
    series.to_csv(path)
    return str(path)


def _report(cfg: ExperimentConfig, series: Dict[str, str], fitted: dict,
            verdicts: List[Verdict], t0: float,
            notes: Optional[List[str]] = None) -> ExperimentReport:
    return ExperimentReport(
        kind=cfg.kind,
        config=cfg.to_dict(),
        stamp=build_stamp(),
        series=series,
        fitted=fitted,
        verdicts=verdicts,
        wall_clock={"elapsed_s": time.perf_counter() - t0, "paths": cfg.paths},
        notes=list(notes or []),
    )


def run_moment_growth(cfg: ExperimentConfig) -> ExperimentReport:
    """Ensemble of forced runs; sup-moment growth and the smoothing gain."""
    t0 = time.perf_counter()
    params = cfg.sim
    grid = params.grid
    out = Path(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    basis = build_basis(cfg.forcing, grid) if cfg.forcing else None
    sched = SmoothingSchedule(cfg.m, cfg.T_m)
    omega0 = rough_initial_field(grid, params.r, params.seed,
                                 cfg.init_amplitude)
    n_steps, every = params.n_steps, cfg.record_every

    def one(tid: int):
        captured = {}

        def gen():
            state = fresh_state(params, basis=basis, omega=omega0,
                                trajectory_id=tid)
            yield (0.0, state.omega)
            for _ in range(n_steps):
                state = step_main(state, params, basis)
                if state.step % every == 0 or state.step == n_steps:
                    if "gain" not in captured and state.t >= cfg.T_m:
                        captured["gain"] = sobolev_norm(
                            state.omega, params.r + cfg.m)
                    yield (state.t, state.omega)

        sup, integ = record_smoothing_moments(
            [gen()], sched, params.r, cfg.q, params.gamma)
        return sup.times, sup.values[0], integ.values[0], \
            captured.get("gain", math.nan)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ResolutionWarning)
        rows = _map_trajectories(one, cfg.paths, cfg.workers)
    n_tail = sum(1 for w in caught if issubclass(w.category, ResolutionWarning))

    times = rows[0][0]
    meta = {"r": params.r, "q": cfg.q, "gamma": params.gamma,
            "m": cfg.m, "T_m": cfg.T_m}
    sup = MomentSeries("smoothing_sup", times,
                       np.vstack([r[1] for r in rows]), meta)
    integ = MomentSeries("smoothing_integral", times,
                         np.vstack([r[2] for r in rows]), dict(meta))
    gains = np.array([r[3] for r in rows])

    sel = _aic_linear_vs_quadratic(times, sup.mean())
    rough_ratio = (sobolev_norm(omega0, params.r + cfg.m)
                   / max(sobolev_norm(omega0, params.r), 1e-300))
    verdicts = [
        Verdict(
            "sup_moment_subquadratic",
            "running sup of the smoothing moment grows at most linearly in "
            "the horizon",
            sel["sub_quadratic"],
            sel,
        ),
        Verdict(
            "smoothing_gain_finite",
            f"H^{params.r + cfg.m:g} norm finite at the end of the ramp "
            "despite rough initial data",
            bool(np.all(np.isfinite(gains)) and np.all(gains > 0)),
            {"gains": gains.tolist(), "initial_norm_ratio": rough_ratio},
        ),
    ]
    series = {
        "smoothing_sup": _write_series(sup, out),
        "smoothing_integral": _write_series(integ, out),
    }
    fitted = {"model_selection": sel,
              "gain_median": float(np.median(gains)),
              "final_sup_mean": float(sup.mean()[-1])}
    notes = []
    if n_tail:
        notes.append(
            f"{n_tail} trajectory records flagged an unresolved spectral "
            "tail (expected near t = 0: the initial data is rough by "
            "construction)"
        )
    return _report(cfg, series, fitted, verdicts, t0, notes)


def _lp_ensemble(cfg: ExperimentConfig, forcing: Optional[ForcingConfig],
                 suffix: str, out: Path
                 ) -> Tuple[MomentSeries, np.ndarray, str]:
    """Ensemble of forced runs recording ||w(t)||_{L^p} at sample times."""
    params = cfg.sim
    grid = params.grid
    basis = build_basis(forcing, grid) if forcing else None
    omega0 = rough_initial_field(grid, params.r, params.seed,
                                 cfg.init_amplitude)
    n_steps, every = params.n_steps, cfg.record_every

    def one(tid: int):
        state = fresh_state(params, basis=basis, omega=omega0,
                            trajectory_id=tid)
        ts = [0.0]
        vals = [lp_norm(state.omega, cfg.p)]
        for _ in range(n_steps):
            state = step_main(state, params, basis)
            if state.step % every == 0 or state.step == n_steps:
                ts.append(state.t)
                vals.append(lp_norm(state.omega, cfg.p))
        return np.asarray(ts), np.asarray(vals)

    rows = _map_trajectories(one, cfg.paths, cfg.workers)
    times = rows[0][0]
    series = MomentSeries(f"lp_norm{suffix}", times,
                          np.vstack([r[1] for r in rows]),
                          {"p": cfg.p})
    integrals = running_integral(times, series.values**2)
    path = _write_series(series, out)
    return series, integrals, path


def run_exp_moment(cfg: ExperimentConfig) -> ExperimentReport:
    """Exponential moment estimators inside the smallness budget."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    gamma = cfg.sim.gamma

    series_paths: Dict[str, str] = {}
    base, base_int, p1 = _lp_ensemble(cfg, cfg.forcing, "", out)
    series_paths["lp_norm"] = p1
    doubled_cfg = ForcingConfig(
        cfg.forcing.modes,
        tuple(2.0 * a for a in cfg.forcing.amplitudes),
    )
    dbl, dbl_int, p2 = _lp_ensemble(cfg, doubled_cfg, "_doubled", out)
    series_paths["lp_norm_doubled"] = p2

    budget = kappa_zero(cfg.p, cfg.forcing, gamma)
    budget_dbl = kappa_zero(cfg.p, doubled_cfg, gamma)
    times = base.times
    n_t = times.size
    if n_t < 5:
        raise ValueError(
            "record_every too coarse for the checkpoint fits; need at "
            f"least 5 recorded samples, got {n_t}"
        )
    if n_t - 1 <= 8:
        checkpoints = list(range(1, n_t))
    else:
        checkpoints = sorted(set(
            int(i) for i in np.linspace(max(1, n_t // 8), n_t - 1, 6).round()
        ))
    ck_times = times[checkpoints]

    kappa_scales = {"quarter": 0.25, "half": 0.5, "full": 1.0}
    mult_label = None
    for label, scale in kappa_scales.items():
        if abs(scale - cfg.kappa_multiplier) < 1e-12:
            mult_label = label
    if mult_label is None:
        kappa_scales["working"] = cfg.kappa_multiplier
        mult_label = "working"
    point_means: Dict[str, List[float]] = {}
    ci_ok = True
    for label, scale in kappa_scales.items():
        b = budget.scaled(scale)
        means = []
        for j, idx in enumerate(checkpoints):
            res = exp_moment_estimator(
                base.values[:, idx], b,
                boot_seed=derive_stream_seed(cfg.sim.seed, _SALT_BOOT + j))
            means.append(res.mean)
            if label == mult_label:
                ci_ok = ci_ok and math.isfinite(res.mean) \
                    and res.ci_width < 0.5 * res.mean
        point_means[label] = means
    finite_ok = all(math.isfinite(v) for vs in point_means.values()
                    for v in vs)

    sel = _aic_linear_vs_quadratic(ck_times, point_means[mult_label])

    def integral_rate(integrals: np.ndarray, b) -> float:
        means = []
        for j, idx in enumerate(checkpoints):
            res = exp_time_integral_estimator(
                integrals[:, idx], b,
                boot_seed=derive_stream_seed(cfg.sim.seed,
                                             _SALT_BOOT + 100 + j))
            means.append(res.mean)
        return fit_log_slope(ck_times, np.asarray(means)).slope

    rate = integral_rate(base_int, budget.scaled(cfg.kappa_multiplier))
    rate_dbl = integral_rate(dbl_int, budget_dbl.scaled(cfg.kappa_multiplier))
    # rates at or below the floor are indistinguishable from zero; without
    # the floor two tiny rates could fail the factor-of-two rule spuriously
    floor = 0.02
    r1, r2 = max(abs(rate), floor), max(abs(rate_dbl), floor)
    rate_stable = max(r1, r2) <= 2.0 * min(r1, r2)

    refused = False
    try:
        exp_moment_estimator(base.values[:, -1], budget.scaled(2.0))
    except BudgetError:
        refused = True

    sigma4 = sigma_lp_norm(cfg.forcing, 4)
    sigma2 = sigma_lp_norm(cfg.forcing, 2)
    k4 = kappa_zero(4, cfg.forcing, gamma).kappa
    k2 = kappa_zero(2, cfg.forcing, gamma).kappa
    mono_applicable = sigma4 >= sigma2
    mono_ok = (k4 <= k2) if mono_applicable else True

    verdicts = [
        Verdict("estimators_finite",
                "pointwise exponential moment finite with tight bootstrap "
                "interval at the working kappa",
                bool(finite_ok and ci_ok),
                {"means": point_means, "checkpoint_times": ck_times.tolist()}),
        Verdict("pointwise_linear_in_T",
                "pointwise exponential moment grows at most linearly in the "
                "horizon",
                sel["sub_quadratic"], sel),
        Verdict("integral_rate_sigma_independent",
                "time-integral exponential rate changes by < 2x under "
                "doubled forcing amplitude with a re-budgeted kappa",
                bool(rate_stable),
                {"rate": rate, "rate_doubled": rate_dbl, "floor": floor}),
        Verdict("over_budget_refused",
                "kappa at twice the budget limit is refused outright",
                refused, {"kappa_limit": budget.kappa}),
        Verdict("budget_monotone_in_p",
                "budget exponent at p = 4 no larger than at p = 2 when the "
                "forcing norm ordering applies",
                bool(mono_ok),
                {"kappa_p4": k4, "kappa_p2": k2,
                 "premise_holds": bool(mono_applicable)}),
    ]
    fitted = {
        "kappa0": budget.kappa,
        "kappa0_doubled": budget_dbl.kappa,
        "integral_rate": rate,
        "integral_rate_doubled": rate_dbl,
        "model_selection": sel,
    }
    return _report(cfg, series_paths, fitted, verdicts, t0)


def run_cont_dependence(cfg: ExperimentConfig) -> ExperimentReport:
    """Shared-noise pairs at several h: linearity and the growth envelope."""
    t0 = time.perf_counter()
    params = cfg.sim
    grid = params.grid
    out = Path(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    basis = build_basis(cfg.forcing, grid) if cfg.forcing else None
    sched = SmoothingSchedule(cfg.m, cfg.T_m)
    omega0 = rough_initial_field(grid, params.r, params.seed,
                                 cfg.init_amplitude)
    xi = direction_field(grid, params.r, params.seed, 0)
    n_steps, every = params.n_steps, cfg.record_every
    hs = tuple(sorted(cfg.h_sweep, reverse=True))

    def one_pair(tid: int, h: float):
        a = fresh_state(params, basis=basis, omega=omega0, trajectory_id=tid)
        b = TrajectoryState(t=0.0, omega=a.omega + h * xi, step=0,
                            stream=a.stream)
        ts, diffs, regs = [], [], []

        def record(sa: TrajectoryState, sb: TrajectoryState):
            alpha = sched(sa.t)
            ts.append(sa.t)
            diffs.append(sobolev_norm(sb.omega - sa.omega,
                                      params.r - 1.0 + alpha))
            regs.append(1.0 + sobolev_norm(sa.omega, params.r + alpha) ** 2
                        + sobolev_norm(sb.omega, params.r + alpha) ** 2)

        record(a, b)
        for _ in range(n_steps):
            a = step_main(a, params, basis)
            b = step_main(b, params, basis)
            if a.step % every == 0 or a.step == n_steps:
                record(a, b)
        return np.asarray(ts), np.asarray(diffs), np.asarray(regs)

    series_paths: Dict[str, str] = {}
    mean_final: Dict[float, float] = {}
    gronwall: Dict[str, dict] = {}
    for h in hs:
        rows = _map_trajectories(lambda tid: one_pair(tid, h), cfg.paths,
                                 cfg.workers)
        times = rows[0][0]
        diff = MomentSeries(f"difference_h{h:g}", times,
                            np.vstack([r[1] for r in rows]), {"h": h})
        series_paths[diff.name] = _write_series(diff, out)
        mean_final[h] = float(diff.mean()[-1])
        mean_diff = diff.mean()
        mean_reg = np.vstack([r[2] for r in rows]).mean(axis=0)
        G = running_integral(times, mean_reg)
        mask = mean_diff > 0
        if mask.sum() >= 2:
            slope, intercept = np.polyfit(G[mask],
                                          np.log(mean_diff[mask] / h), 1)
            pred = slope * G[mask] + intercept
            y = np.log(mean_diff[mask] / h)
            ss_tot = float(np.sum((y - y.mean()) ** 2))
            r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot \
                if ss_tot > 0 else 1.0
        else:
            slope, r2 = math.nan, math.nan
        gronwall[f"h={h:g}"] = {"slope": float(slope), "r_squared": r2}

    h_ref = hs[-1]
    ratios = {h: mean_final[h] / h / (mean_final[h_ref] / h_ref) for h in hs}
    linear_ok = all(0.8 <= v <= 1.2 for v in ratios.values())
    envelope_ok = all(math.isfinite(v["slope"]) for v in gronwall.values())

    verdicts = [
        Verdict("difference_linear_in_h",
                "difference at the horizon scales linearly in the "
                "perturbation size across the h sweep",
                bool(linear_ok),
                {"normalized_ratios": {f"h={h:g}": v
                                       for h, v in ratios.items()}}),
        Verdict("growth_envelope_affine",
                "log-difference bounded along the pair by an affine "
                "function of the accumulated regularity integral",
                bool(envelope_ok), gronwall),
    ]
    fitted = {"mean_final": {f"h={h:g}": v for h, v in mean_final.items()},
              "gronwall": gronwall}
    return _report(cfg, series_paths, fitted, verdicts, t0)


def run_control_decay(cfg: ExperimentConfig) -> ExperimentReport:
    """Damped linearized flow along one forced trajectory, swept over N."""
    t0 = time.perf_counter()
    params = cfg.sim
    grid = params.grid
    out = Path(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    basis = build_basis(cfg.forcing, grid) if cfg.forcing else None
    omega0 = rough_initial_field(grid, params.r, params.seed,
                                 cfg.init_amplitude)
    dirs = [direction_field(grid, params.r, params.seed, j)
            for j in range(cfg.n_directions)]
    Ns = tuple(sorted(cfg.N_sweep))
    n_steps, every = params.n_steps, cfg.record_every
    gamma, r = params.gamma, params.r

    if basis is not None:
        mode_k = np.array([math.hypot(k1, k2)
                           for k1, k2 in basis.config.modes])
        masks = {N: mode_k <= N for N in Ns}

    rhos: Dict[Tuple[int, int], SpectralField] = {
        (N, j): dirs[j] for N in Ns for j in range(cfg.n_directions)
    }
    budgets = {key: 0.0 for key in rhos}

    ts: List[float] = []
    rec_neg: Dict[Tuple[int, int], List[float]] = {k: [] for k in rhos}
    rec_s: Dict[Tuple[int, int], List[float]] = {k: [] for k in rhos}
    rec_budget: Dict[Tuple[int, int], List[float]] = {k: [] for k in rhos}

    def record(t: float):
        s_t = bootstrap_exponent(r, gamma, t) if gamma > 0 else r
        ts.append(t)
        for key, rho in rhos.items():
            rec_neg[key].append(sobolev_norm(rho, -1.0))
            rec_s[key].append(sobolev_norm(rho, s_t))
            rec_budget[key].append(budgets[key])

    state = fresh_state(params, basis=basis, omega=omega0, trajectory_id=0)
    record(0.0)
    for _ in range(n_steps):
        ctx = FrozenFlow(state.omega)
        for (N, j), rho in rhos.items():
            if basis is not None:
                reads = basis.sigma_star(rho)[masks[N]]
                budgets[(N, j)] += params.dt * lambda_N(N) ** gamma \
                    * float(np.sum(reads**2))
            rhos[(N, j)], _ = step_control(rho, state.omega, N, params, ctx)
        state = step_main(state, params, basis)
        if state.step % every == 0 or state.step == n_steps:
            record(state.t)

    times = np.asarray(ts)
    series_paths: Dict[str, str] = {}
    slopes: Dict[int, float] = {}
    window = default_fit_window(gamma, params.T) if gamma > 0 \
        else (0.0, params.T)
    for N in Ns:
        neg = MomentSeries(
            f"control_hneg1_N{N}", times,
            np.vstack([rec_neg[(N, j)] for j in range(cfg.n_directions)]),
            {"N": N})
        hs = MomentSeries(
            f"control_hs_N{N}", times,
            np.vstack([rec_s[(N, j)] for j in range(cfg.n_directions)]),
            {"N": N})
        bud = MomentSeries(
            f"control_budget_N{N}", times,
            np.vstack([rec_budget[(N, j)] for j in range(cfg.n_directions)]),
            {"N": N})
        series_paths[neg.name] = _write_series(neg, out)
        series_paths[hs.name] = _write_series(hs, out)
        series_paths[bud.name] = _write_series(bud, out)
        slopes[N] = fit_log_slope(times, neg.mean(), window).slope

    N_max = Ns[-1]
    ordered = all(slopes[Ns[i + 1]] < slopes[Ns[i]]
                  for i in range(len(Ns) - 1))
    mono_ok = slopes[N_max] < 0 and (ordered if len(Ns) > 1 else True)

    hs_mean = np.vstack(
        [rec_s[(N_max, j)] for j in range(cfg.n_directions)]).mean(axis=0)
    post = (min(1.0 / gamma, 0.5 * params.T), params.T) if gamma > 0 \
        else (0.0, params.T)
    hs_slope = fit_log_slope(times, hs_mean, post).slope

    bud_mean = np.vstack(
        [rec_budget[(N_max, j)] for j in range(cfg.n_directions)]).mean(axis=0)
    half_idx = int(np.searchsorted(times, 0.5 * params.T))
    half_idx = min(max(half_idx, 1), times.size - 1)
    b_half, b_full = float(bud_mean[half_idx]), float(bud_mean[-1])
    budget_ok = math.isfinite(b_full) and (
        b_full <= 2.0 * b_half + 1e-12 if b_half > 0 else b_full == 0.0)

    verdicts = [
        Verdict("hneg1_decay_monotone_in_N",
                "negative-index norm decays for the widest damping band and "
                "the fitted slope steepens with N",
                bool(mono_ok),
                {"slopes": {f"N={N}": slopes[N] for N in Ns},
                 "reference_rate": -float(N_max) ** gamma / 16.0}),
        Verdict("post_ramp_high_norm_decays",
                "high-index norm of the damped direction decays after the "
                "regularity ramp finishes",
                bool(hs_slope < 0), {"slope": hs_slope, "window": post}),
        Verdict("injection_budget_stable",
                "damped-band injection budget stays finite and grows "
                "sublinearly in the horizon",
                bool(budget_ok),
                {"budget_half": b_half, "budget_full": b_full}),
    ]
    fitted = {"hneg1_slopes": {f"N={N}": slopes[N] for N in Ns},
              "hs_slope": hs_slope,
              "budget": {"half": b_half, "full": b_full}}
    return _report(cfg, series_paths, fitted, verdicts, t0)


def run_irreducibility(cfg: ExperimentConfig) -> ExperimentReport:
    """Shifted system under a noise-amplitude sweep; plateau and hitting."""
    t0 = time.perf_counter()
    params = cfg.sim
    grid = params.grid
    out = Path(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    gamma, r = params.gamma, params.r
    p = p_gamma(gamma)
    omega0 = rough_initial_field(grid, r, params.seed, cfg.R)
    n_steps, every = params.n_steps, cfg.record_every
    eps_sweep = tuple(sorted(set(cfg.eps_noise), reverse=True))

    series_paths: Dict[str, str] = {}
    plateaus: Dict[float, float] = {}
    hit_fractions: Dict[float, float] = {}
    lp_mean_by_eps: Dict[float, np.ndarray] = {}
    times_ref: Optional[np.ndarray] = None

    for eps in eps_sweep:
        if eps > 0:
            forcing_eps = ForcingConfig(
                cfg.forcing.modes,
                tuple(eps * a for a in cfg.forcing.amplitudes),
            )
            basis = build_basis(forcing_eps, grid)
        else:
            basis = None

        def one(tid: int):
            stream = NoiseStream(derive_stream_seed(params.seed, tid),
                                 len(cfg.forcing.modes))
            wbar = omega0
            Z = SpectralField.zeros(grid)
            ts = [0.0]
            lp = [lp_norm(wbar, p)]
            hr = [sobolev_norm(wbar, r)]
            comb = [sobolev_norm(wbar + Z, r)]
            for step in range(n_steps):
                wbar = step_shifted(wbar, Z, params)
                if basis is not None:
                    inc = stream.increments(step, params.dt)
                    Z = ou_exact_step(Z, params.dt, inc, gamma, basis)
                if (step + 1) % every == 0 or step + 1 == n_steps:
                    ts.append((step + 1) * params.dt)
                    lp.append(lp_norm(wbar, p))
                    hr.append(sobolev_norm(wbar, r))
                    comb.append(sobolev_norm(wbar + Z, r))
            hit = comb[-1] < cfg.eta * cfg.R
            return (np.asarray(ts), np.asarray(lp), np.asarray(hr),
                    np.asarray(comb), hit)

        rows = _map_trajectories(one, cfg.paths, cfg.workers)
        times = rows[0][0]
        times_ref = times
        tag = f"eps{eps:g}"
        lp_s = MomentSeries(f"shifted_lp_{tag}", times,
                            np.vstack([x[1] for x in rows]), {"eps": eps})
        hr_s = MomentSeries(f"shifted_hr_{tag}", times,
                            np.vstack([x[2] for x in rows]), {"eps": eps})
        comb_s = MomentSeries(f"combined_hr_{tag}", times,
                              np.vstack([x[3] for x in rows]), {"eps": eps})
        for s in (lp_s, hr_s, comb_s):
            series_paths[s.name] = _write_series(s, out)
        plateaus[eps] = float(hr_s.mean()[-1])
        hit_fractions[eps] = float(np.mean([x[4] for x in rows]))
        lp_mean_by_eps[eps] = lp_s.mean()

    eps_min = eps_sweep[-1]
    plateau_vals = [plateaus[e] for e in eps_sweep]
    plateau_ok = all(a > b for a, b in zip(plateau_vals, plateau_vals[1:]))

    lp_mean = lp_mean_by_eps[eps_min]
    drop = np.nonzero(lp_mean <= lp_mean[0] / math.e)[0]
    t_end = float(times_ref[drop[0]]) if drop.size else 0.5 * params.T
    t_end = max(t_end, float(times_ref[min(2, times_ref.size - 1)]))
    try:
        transient = fit_log_slope(times_ref, lp_mean, (0.0, t_end))
        transient_slope = transient.slope
    except ValueError:
        # all-zero or degenerate series (for instance R = 0)
        transient_slope = math.nan
    p_int = int(round(p))
    p_use = p_int if (p_int == p and p_int >= 4 and p_int % 2 == 0) else None
    c_gamma = poincare_constant(2, gamma, p_use)
    ref_rate = 1.0 / (2.0 * c_gamma)
    observed = -transient_slope
    rate_in_band = 0.2 * ref_rate <= observed <= 5.0 * ref_rate

    hit_ok = hit_fractions[eps_min] >= 0.9

    verdicts = [
        Verdict("plateau_monotone_in_amplitude",
                "H^r plateau of the shifted state shrinks as the noise "
                "amplitude shrinks",
                bool(plateau_ok),
                {"plateaus": {f"eps={e:g}": plateaus[e] for e in eps_sweep}}),
        Verdict("transient_rate_order_of_magnitude",
                "transient Lebesgue-norm decay rate within [0.2, 5] x the "
                "dissipation-constant prediction",
                bool(rate_in_band),
                {"observed_rate": observed, "reference_rate": ref_rate,
                 "window_end": t_end, "p": p}),
        Verdict("hits_target_ball",
                f"combined state enters the {cfg.eta:g} R ball by the "
                "horizon in at least 90% of paths at the smallest amplitude",
                bool(hit_ok),
                {"hit_fractions": {f"eps={e:g}": hit_fractions[e]
                                   for e in eps_sweep}}),
    ]
    fitted = {"plateaus": {f"eps={e:g}": plateaus[e] for e in eps_sweep},
              "hit_fractions": {f"eps={e:g}": hit_fractions[e]
                                for e in eps_sweep},
              "transient_rate": observed,
              "reference_rate": ref_rate}
    notes = [
        "conditioning on a small-noise path event is replaced by the "
        "amplitude sweep eps_noise -> 0: rejection sampling on sup |W| is "
        "exponentially costly and the sweep probes the same stability "
        "mechanism",
    ]
    return _report(cfg, series_paths, fitted, verdicts, t0, notes)


def _embed_double(f: SpectralField) -> SpectralField:
    """Same coefficients on the doubled grid."""
    n = f.grid.n
    g2 = Grid2D.create(2 * n)
    m = n // 2
    c = np.zeros((2 * n, n + 1), dtype=np.complex128)
    c[:m, : m + 1] = f.coeffs[:m, : m + 1]
    c[-m:, : m + 1] = f.coeffs[-m:, : m + 1]
    return SpectralField.from_coeffs(g2, c)


def run_inequalities(cfg: ExperimentConfig) -> ExperimentReport:
    """Randomized sweep of every inequality check; aggregate verdicts."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    seed = cfg.sim.seed
    case_rows: List[list] = []
    verdicts: List[Verdict] = []

    for p in cfg.ps:
        sweep = fp_grid_violations(p)
        verdicts.append(Verdict(
            f"scalar_trick_grid_p{p}",
            "no violations of the scalar power inequality on the centered "
            f"grid at p = {p}",
            sweep.violations == 0,
            {"violations": sweep.violations, "total": sweep.total,
             "worst_margin": sweep.worst_margin,
             "worst_point": list(sweep.worst_point)},
        ))
        case_rows.append([f"scalar_grid_p{p}", "sweep", math.nan, math.nan,
                          sweep.worst_margin, sweep.violations == 0])

    eq_exact = True
    for a in (3.7, -2.25, 11.0):
        for p in cfg.ps:
            rep = check_fp_scalar(a, 0.0, p)
            eq_exact = eq_exact and rep.margin == 0.0
            case_rows.append([rep.inequality, f"a={a},b=0,p={p}", rep.lhs,
                              rep.rhs, rep.margin, rep.passed])
    verdicts.append(Verdict(
        "scalar_trick_equality_b0",
        "b = 0 reduces the scalar inequality to exact equality",
        eq_exact, {}))

    grid = Grid2D.create(64)
    gen = _rng(seed, _SALT_CASES)
    p_choices = (2, 4, 6)
    all_pos = True
    min_margin = math.inf
    for i in range(cfg.poincare_cases):
        p = p_choices[i % len(p_choices)]
        g = float(gen.uniform(0.2, 1.8))
        theta = _random_band_field(grid, gen, band=6,
                                   decay=float(gen.uniform(0.8, 1.6)),
                                   amplitude=float(gen.uniform(0.5, 3.0)))
        rep = check_poincare(theta, p, g)
        all_pos = all_pos and rep.passed
        min_margin = min(min_margin, rep.margin)
        case_rows.append([rep.inequality, f"case{i},p={p},gamma={g:.3f}",
                          rep.lhs, rep.rhs, rep.margin, rep.passed])
    verdicts.append(Verdict(
        "poincare_random_sweep",
        "integral inequality margin nonnegative on randomized fields "
        "across p and gamma",
        all_pos, {"cases": cfg.poincare_cases, "min_margin": min_margin}))

    shift_ok = True
    for i in range(5):
        theta = _random_band_field(grid, gen, band=5, decay=1.0,
                                   amplitude=1.5)
        j1, j2 = int(gen.integers(1, 64)), int(gen.integers(1, 64))
        phase = np.exp(-1j * (grid.kk1 * (2 * np.pi * j1 / 64)
                              + grid.kk2 * (2 * np.pi * j2 / 64)))
        shifted = SpectralField.from_coeffs(grid, theta.coeffs * phase)
        m0 = check_poincare(theta, 4, 1.0).margin
        m1 = check_poincare(shifted, 4, 1.0).margin
        shift_ok = shift_ok and abs(m1 - m0) <= 1e-10 * max(abs(m0), 1e-300)
    verdicts.append(Verdict(
        "poincare_translation_invariant",
        "inequality margin unchanged under lattice translations to 1e-10",
        shift_ok, {}))

    gamma_c = cfg.sim.gamma if 0.0 < cfg.sim.gamma <= 2.0 else 1.0
    # the cubic pairing must dominate the quadratic absorbed term for the
    # rescaling check to engage, hence the large target amplitudes; the two
    # small fields only feed the sup
    fields = []
    for scale in (2e4, 2.5e4, 3e4, 3.5e4, 4e4, 1.0, 40.0):
        f = _random_band_field(grid, gen, band=10, decay=1.5, amplitude=1.0)
        fields.append((scale / sobolev_norm(f, 1.0)) * f)
    study = commutator_ratio_study(fields, 2.0, gamma_c, cfg.eps)
    study2 = commutator_ratio_study([_embed_double(f) for f in fields],
                                    2.0, gamma_c, cfg.eps)
    sup1, sup2 = study["sup_ratio"], study2["sup_ratio"]
    refine_ok = sup1 > 0 and abs(sup2 - sup1) < 0.10 * sup1
    verdicts.append(Verdict(
        "commutator_ratio_study",
        "empirical commutator constant finite and consistent under field "
        "rescaling",
        bool(study["finite"] and study["scaling_consistent"]
             and study["n_scaling_checked"] > 0),
        {"sup_ratio": sup1, "checked": study["n_scaling_checked"]}))
    verdicts.append(Verdict(
        "commutator_refinement_stable",
        "empirical commutator constant moves < 10% under grid doubling",
        bool(refine_ok), {"sup_ratio": sup1, "sup_ratio_doubled": sup2}))

    verdicts.append(Verdict(
        "exponent_formulas",
        "interpolation and Lebesgue exponent formulas match their defining "
        "arithmetic at the reference points",
        q_exponent(2.0, 2.0) == 5.0 and p_gamma(1.0) == 8.0,
        {"q_2_2": q_exponent(2.0, 2.0), "p_gamma_1": p_gamma(1.0)}))

    cases_path = out / "inequality_cases.csv"
    with open(cases_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["inequality", "case", "lhs", "rhs", "margin",
                         "passed"])
        writer.writerows(case_rows)

    fitted = {"commutator_sup_ratio": sup1,
              "poincare_min_margin": min_margin}
    return _report(cfg, {"inequality_cases": str(cases_path)}, fitted,
                   verdicts, t0)


def _random_band_field(grid: Grid2D, gen: np.random.Generator, band: int,
                       decay: float, amplitude: float) -> SpectralField:
    c = gen.standard_normal(grid.k_abs.shape) \
        + 1j * gen.standard_normal(grid.k_abs.shape)
    kband = np.maximum(np.abs(grid.kk1), grid.kk2)
    k = np.where(grid.k_sq > 0, grid.k_abs, 1.0)
    c *= np.where((grid.k_sq > 0) & (kband <= band), k ** (-decay), 0.0)
    f = SpectralField.from_coeffs(grid, c)
    peak = float(np.abs(f.coeffs).max())
    return (amplitude / peak) * f if peak > 0 else f


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig], ExperimentReport]] = {
    "moment-growth": run_moment_growth,
    "smoothing": run_moment_growth,
    "exp-moment": run_exp_moment,
    "cont-dependence": run_cont_dependence,
    "control-decay": run_control_decay,
    "irreducibility": run_irreducibility,
    "inequalities": run_inequalities,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return EXPERIMENTS[cfg.kind](cfg)
