"""Recording, estimators, budgets, fits, and the two-seed diagnostic."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from felab.observables import (
    BudgetError,
    KappaBudget,
    MomentSeries,
    ResolutionWarning,
    SmoothingSchedule,
    alpha_at,
    band_energy,
    bootstrap_exponent,
    bounded_functionals,
    default_fit_window,
    exp_moment_estimator,
    exp_time_integral_estimator,
    fit_decay_rate,
    fit_log_slope,
    kappa_zero,
    record_smoothing_moments,
    running_integral,
    time_average_diagnostic,
)
from felab.spectral import SpectralField, sobolev_norm

from conftest import random_field


class TestSmoothingSchedule:
    def test_ramp_values(self):
        sched = SmoothingSchedule(m=2.0, T_m=4.0)
        assert alpha_at(sched, 0.0) == 0.0
        assert alpha_at(sched, 1.0) == 0.5
        assert alpha_at(sched, 2.0) == 1.0
        assert alpha_at(sched, 4.0) == 2.0
        assert alpha_at(sched, 10.0) == 2.0
        assert sched(1.0) == 0.5

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            alpha_at(SmoothingSchedule(1.0, 1.0), -0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            SmoothingSchedule(-1.0, 1.0)
        with pytest.raises(ValueError):
            SmoothingSchedule(1.0, 0.0)

    def test_bootstrap_exponent(self):
        # s(t) = r - 1 + t gamma until the cap at t = 1/gamma
        assert bootstrap_exponent(2.5, 0.5, 0.0) == 1.5
        assert bootstrap_exponent(2.5, 0.5, 1.0) == 2.0
        assert bootstrap_exponent(2.5, 0.5, 2.0) == 2.5
        assert bootstrap_exponent(2.5, 0.5, 7.0) == 2.5
        with pytest.raises(ValueError):
            bootstrap_exponent(2.5, 0.0, 1.0)


class TestMomentSeries:
    def _series(self):
        times = np.array([0.0, 0.5, 1.25, 2.0])
        values = np.array([[1.0, 2.0, 3.0, 4.0], [3.0, 2.0, 1.0, 0.5]])
        return MomentSeries("demo", times, values, {"p": 4})

    def test_shape_and_stats(self):
        s = self._series()
        assert s.n_trajectories == 2
        assert np.array_equal(s.mean(), np.array([2.0, 2.0, 2.0, 2.25]))
        want = np.std([1.0, 3.0], ddof=1) / math.sqrt(2)
        assert s.stderr()[0] == pytest.approx(want)

    def test_single_trajectory_stderr_zero(self):
        s = MomentSeries("one", [0.0, 1.0], [2.0, 3.0])
        assert s.n_trajectories == 1
        assert np.array_equal(s.stderr(), np.zeros(2))

    def test_validation(self):
        with pytest.raises(ValueError):
            MomentSeries("bad", [], [])
        with pytest.raises(ValueError):
            MomentSeries("bad", [0.0, 0.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            MomentSeries("bad", [1.0, 0.5], [1.0, 2.0])
        with pytest.raises(ValueError):
            MomentSeries("bad", [0.0, 1.0], [[1.0, 2.0, 3.0]])

    def test_csv_round_trip_bit_exact(self, tmp_path):
        # repr floats survive the text round trip unchanged, so re-running
        # the statistics off the file reproduces them bit for bit
        rng = np.random.default_rng(3)
        times = np.cumsum(rng.uniform(0.01, 0.3, size=17))
        values = rng.standard_normal((5, 17)) * np.pi
        s = MomentSeries("rt", times, values)
        path = tmp_path / "series.csv"
        s.to_csv(path)
        back = MomentSeries.from_csv(path, name="rt")
        assert np.array_equal(back.times, s.times)
        assert np.array_equal(back.values, s.values)
        assert np.array_equal(back.mean(), s.mean())
        assert np.array_equal(back.stderr(), s.stderr())

    def test_csv_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,id,val\n0.0,0,1.0\n")
        with pytest.raises(ValueError, match="header"):
            MomentSeries.from_csv(path)

    def test_csv_empty_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("t,trajectory_id,value\n")
        with pytest.raises(ValueError, match="empty"):
            MomentSeries.from_csv(path)

    def test_csv_mismatched_times_rejected(self, tmp_path):
        path = tmp_path / "mismatch.csv"
        path.write_text(
            "t,trajectory_id,value\n"
            "0.0,0,1.0\n1.0,0,2.0\n"
            "0.0,1,1.0\n1.5,1,2.0\n"
        )
        with pytest.raises(ValueError, match="mismatched"):
            MomentSeries.from_csv(path)

    def test_json_summary(self, tmp_path):
        s = self._series()
        path = tmp_path / "series.json"
        s.to_json(path)
        loaded = json.loads(path.read_text())
        assert loaded["name"] == "demo"
        assert loaded["n_trajectories"] == 2
        assert loaded["mean"] == s.mean().tolist()
        assert loaded["metadata"] == {"p": 4}


class TestSmoothingRecord:
    def test_single_mode_closed_form(self, grid32):
        # omega(t) = e^{-t} omega_0 for a |k| = 1 mode: the running sup of
        # ||L^r w||^q stays at its initial value and the dissipation
        # integral is A^2 B^{q-2} (1 - e^{-qT}) / q
        omega0 = SpectralField.from_modes(grid32, {(1, 0): 0.5})
        r, q, gamma = 1.0, 3.0, 1.0
        dt, T = 1e-3, 2.0
        times = np.arange(0.0, T + dt / 2, dt)
        traj = [(float(t), math.exp(-t) * omega0) for t in times]
        sched = SmoothingSchedule(m=0.0, T_m=1.0)
        sup, integ = record_smoothing_moments([traj], sched, r, q, gamma)

        B = sobolev_norm(omega0, r)
        A = sobolev_norm(omega0, r + gamma / 2)
        assert np.allclose(sup.values[0], B**q, rtol=1e-12)
        want = A**2 * B ** (q - 2) * (1 - math.exp(-q * T)) / q
        assert integ.values[0, -1] == pytest.approx(want, rel=1e-5)
        assert integ.values[0, 0] == 0.0
        assert sup.metadata["q"] == q

    def test_growing_trajectory_sup_tracks_max(self, grid32):
        omega0 = SpectralField.from_modes(grid32, {(1, 1): 0.25})
        times = [0.0, 1.0, 2.0, 3.0]
        scale = [1.0, 3.0, 2.0, 0.5]
        traj = [(t, s * omega0) for t, s in zip(times, scale)]
        sched = SmoothingSchedule(m=0.0, T_m=1.0)
        sup, _ = record_smoothing_moments([traj], sched, 1.0, 2.0, 1.0)
        b2 = sobolev_norm(omega0, 1.0) ** 2
        assert np.allclose(sup.values[0], np.array([1.0, 9.0, 9.0, 9.0]) * b2)

    def test_ramp_changes_norm_order(self, grid32):
        # with m > 0 the recorded norm order rises along the ramp, so a
        # high mode's contribution grows relative to alpha = 0
        omega0 = SpectralField.from_modes(grid32, {(4, 2): 0.5})
        traj = [(t, omega0) for t in (0.0, 0.5, 1.0)]
        sup0, _ = record_smoothing_moments(
            [traj], SmoothingSchedule(0.0, 1.0), 1.0, 2.0, 1.0)
        sup1, _ = record_smoothing_moments(
            [traj], SmoothingSchedule(1.0, 1.0), 1.0, 2.0, 1.0)
        assert sup1.values[0, -1] > sup0.values[0, -1]

    def test_multiple_trajectories_share_grid(self, grid32):
        omega0 = SpectralField.from_modes(grid32, {(1, 0): 0.5})
        t1 = [(0.0, omega0), (1.0, 0.5 * omega0)]
        t2 = [(0.0, 2.0 * omega0), (1.0, omega0)]
        sup, integ = record_smoothing_moments(
            [t1, t2], SmoothingSchedule(0.0, 1.0), 1.0, 2.0, 1.0)
        assert sup.values.shape == (2, 2)
        assert integ.values.shape == (2, 2)

    def test_mismatched_time_grids_rejected(self, grid32):
        omega0 = SpectralField.from_modes(grid32, {(1, 0): 0.5})
        t1 = [(0.0, omega0), (1.0, omega0)]
        t2 = [(0.0, omega0), (1.5, omega0)]
        with pytest.raises(ValueError, match="time grids"):
            record_smoothing_moments([t1, t2], SmoothingSchedule(0.0, 1.0),
                                     1.0, 2.0, 1.0)

    def test_no_trajectories_rejected(self):
        with pytest.raises(ValueError, match="no trajectories"):
            record_smoothing_moments([], SmoothingSchedule(0.0, 1.0),
                                     1.0, 2.0, 1.0)

    def test_unresolved_tail_warns(self, grid32):
        # mode (9, 0) sits above 0.8 x cutoff (cutoff 10 at n = 32)
        spiky = SpectralField.from_modes(grid32, {(9, 0): 0.5})
        traj = [(0.0, spiky), (1.0, spiky)]
        with pytest.warns(ResolutionWarning):
            record_smoothing_moments([traj], SmoothingSchedule(0.0, 1.0),
                                     1.0, 2.0, 1.0)


class TestKappaBudget:
    def test_no_forcing_gives_half(self):
        budget = kappa_zero(4, None, 1.0)
        assert budget.kappa == 0.5
        assert budget.slack() == pytest.approx(0.0, abs=1e-15)
        budget.validate()

    def test_override_case(self):
        budget = kappa_zero(4, None, 1.0, c_gamma=3.0, sigma_lp=1.0)
        assert budget.kappa == 0.125
        budget.validate()

    def test_kappa_decreases_with_forcing(self):
        k1 = kappa_zero(4, None, 1.0, c_gamma=3.0, sigma_lp=1.0)
        k2 = kappa_zero(4, None, 1.0, c_gamma=3.0, sigma_lp=2.0)
        assert k2.kappa < k1.kappa

    def test_small_p_rejected(self):
        with pytest.raises(ValueError):
            kappa_zero(1.5, None, 1.0)

    def test_budget_violation_raises(self):
        budget = kappa_zero(4, None, 1.0, c_gamma=3.0, sigma_lp=1.0)
        with pytest.raises(BudgetError):
            budget.scaled(1.5).validate()
        with pytest.raises(BudgetError):
            KappaBudget(4, -0.1, 0.0, 0.0).validate()

    def test_estimator_refuses_bad_budget(self):
        budget = kappa_zero(4, None, 1.0).scaled(2.0)
        with pytest.raises(BudgetError):
            exp_moment_estimator([1.0, 2.0], budget)
        with pytest.raises(BudgetError):
            exp_time_integral_estimator([1.0, 2.0], budget)


class TestEstimators:
    def test_kappa_zero_limit_is_one(self):
        budget = KappaBudget(4, 0.0, 0.0, 0.0)
        res = exp_moment_estimator([0.3, 7.0, 2.0], budget)
        assert res.mean == 1.0
        assert res.ci_width == 0.0
        assert not res.heavy_tail
        assert res.n_samples == 3

    def test_constant_samples_give_point_interval(self):
        budget = KappaBudget(4, 0.25, 0.0, 0.0)
        res = exp_time_integral_estimator([2.0] * 8, budget)
        assert res.mean == pytest.approx(math.exp(0.5), rel=1e-15)
        assert res.ci_low == res.ci_high == res.mean

    def test_reproducible_given_seed(self):
        budget = KappaBudget(4, 0.1, 0.0, 0.0)
        vals = list(np.random.default_rng(5).uniform(0, 2, 40))
        a = exp_moment_estimator(vals, budget, boot_seed=9)
        b = exp_moment_estimator(vals, budget, boot_seed=9)
        assert (a.mean, a.ci_low, a.ci_high) == (b.mean, b.ci_low, b.ci_high)

    def test_heavy_tail_flagged(self):
        # one huge sample dominates: the bootstrap interval dwarfs the mean
        budget = KappaBudget(4, 0.25, 0.0, 0.0)
        res = exp_time_integral_estimator([0.0] * 9 + [40.0], budget,
                                          boot_seed=1)
        assert res.heavy_tail
        assert res.ci_width > abs(res.mean)


class TestRunningIntegral:
    def test_linear_exact(self):
        t = np.linspace(0.0, 1.0, 11)
        out = running_integral(t, t.copy())
        assert np.allclose(out, t**2 / 2, atol=1e-15)

    def test_batch_rows_independent(self):
        t = np.array([0.0, 1.0, 3.0])
        vals = np.array([[1.0, 1.0, 1.0], [0.0, 2.0, 2.0]])
        out = running_integral(t, vals)
        assert np.allclose(out[0], [0.0, 1.0, 3.0])
        assert np.allclose(out[1], [0.0, 1.0, 5.0])


class TestDecayFits:
    def test_recovers_exponential(self):
        t = np.linspace(0.0, 10.0, 101)
        fit = fit_log_slope(t, 3.0 * np.exp(-2.0 * t))
        assert fit.slope == pytest.approx(-2.0, abs=1e-10)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
        assert fit.r_squared > 1 - 1e-12

    def test_constant_series(self):
        t = np.linspace(0.0, 5.0, 20)
        fit = fit_log_slope(t, np.full(20, 2.5))
        assert abs(fit.slope) < 1e-12
        assert fit.r_squared == 1.0

    @given(a=st.floats(min_value=-10.0, max_value=10.0))
    @settings(max_examples=40, deadline=None)
    def test_slope_recovery_property(self, a):
        t = np.linspace(0.0, 3.0, 61)
        fit = fit_log_slope(t, np.exp(a * t))
        assert fit.slope == pytest.approx(a, rel=1e-8, abs=1e-8)

    def test_window_honored(self):
        t = np.linspace(0.0, 10.0, 201)
        v = np.exp(-2.0 * t)
        v[t < 2.0] += 5.0
        fit = fit_log_slope(t, v, window=(5.0, 10.0))
        assert fit.slope == pytest.approx(-2.0, abs=1e-9)
        assert fit.n_points == int(((t >= 5.0) & (t <= 10.0)).sum())
        assert fit.window == (5.0, 10.0)

    def test_window_errors(self):
        t = np.linspace(0.0, 1.0, 5)
        with pytest.raises(ValueError, match="fewer than two"):
            fit_log_slope(t, np.exp(-t), window=(0.9, 0.95))
        with pytest.raises(ValueError, match="positive"):
            fit_log_slope(t, np.array([1.0, -1.0, 1.0, 1.0, 1.0]))

    def test_default_fit_window(self):
        assert default_fit_window(0.5, 20.0) == (2.0, 20.0)
        assert default_fit_window(0.05, 10.0) == (5.0, 10.0)
        with pytest.raises(ValueError):
            default_fit_window(0.0, 10.0)
        with pytest.raises(ValueError):
            default_fit_window(1.0, 0.0)

    def test_fit_decay_rate_uses_ensemble_mean(self):
        t = np.linspace(0.0, 4.0, 41)
        v = np.exp(-3.0 * t)
        series = MomentSeries("e", t, np.vstack([v, v]))
        fit = fit_decay_rate(series)
        assert fit.slope == pytest.approx(-3.0, abs=1e-10)


class TestTimeAverage:
    def test_identical_streams_agree(self):
        t = np.linspace(0.0, 50.0, 500)
        v = 1.0 + np.sin(t) * np.exp(-0.05 * t)
        rep = time_average_diagnostic(t, v, v.copy(), functional="f")
        assert rep.diff_final == 0.0
        assert rep.agree
        assert rep.shrinking

    def test_constant_functional(self):
        t = np.linspace(0.0, 10.0, 50)
        rep = time_average_diagnostic(t, np.ones(50), np.ones(50))
        assert rep.avg_a == 1.0
        assert rep.avg_b == 1.0

    def test_converging_streams_agree(self):
        t = np.linspace(0.0, 200.0, 2000)
        a = 1.0 + np.sin(2.1 * t) / (1.0 + 0.2 * t)
        b = 1.0 + np.cos(1.3 * t) / (1.0 + 0.3 * t)
        rep = time_average_diagnostic(t, a, b)
        assert rep.diff_final < 0.05
        assert rep.agree

    def test_disagreeing_streams_flagged(self):
        t = np.linspace(0.0, 10.0, 100)
        rep = time_average_diagnostic(t, np.ones(100), np.full(100, 2.0))
        assert rep.diff_final == 1.0
        assert not rep.agree

    def test_fluctuation_counts_returning_excursions(self):
        # cos has running average sin(t)/t: over the second half window it
        # swings through several extrema, so its excursion dwarfs the net
        # endpoint move; the agreement scale must see the swings
        t = np.linspace(0.0, 40.0, 4001)
        rep = time_average_diagnostic(t, np.cos(t), np.zeros(4001))
        ra_end = np.sin(40.0) / 40.0
        ra_half = np.sin(20.0) / 20.0
        assert rep.fluct_b == 0.0
        assert rep.fluct_a > 2.0 * abs(ra_end - ra_half)
        assert rep.agree

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError):
            time_average_diagnostic(np.array([0.0, 1.0]), np.ones(2),
                                    np.ones(2))


class TestBoundedFunctionals:
    def test_five_functionals_bounded(self, grid32):
        fns = bounded_functionals()
        assert len(fns) == 5
        f = random_field(grid32, seed=2, band=8, decay=1.0, amplitude=3.0)
        for name, fn in fns.items():
            v = fn(f)
            assert math.isfinite(v), name
            assert abs(v) <= 1.0, name

    def test_zero_field_values(self, grid32):
        fns = bounded_functionals()
        z = SpectralField.zeros(grid32)
        assert fns["tanh_energy"](z) == 0.0
        assert fns["tanh_sin_1_0"](z) == 0.0

    def test_sine_coefficient_functional(self, grid32):
        # f = sin x1 has spectral coefficient -i/2 at (1, 0)
        f = SpectralField.from_modes(grid32, {(1, 0): -0.5j})
        fns = bounded_functionals()
        assert fns["tanh_sin_1_0"](f) == pytest.approx(math.tanh(1.0), rel=1e-12)

    def test_band_energy_partition(self, grid32):
        f = SpectralField.from_modes(grid32, {(1, 0): 0.5})
        assert band_energy(f, 0.5, 1.5) == pytest.approx(
            sobolev_norm(f, 0.0) ** 2, rel=1e-12)
        assert band_energy(f, 2.0, 3.0) == 0.0
