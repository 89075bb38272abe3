"""Dynamics tests.

Oracles: the two-mode advection product B(sin x1, sin x2) = -cos x1 cos x2,
exact semigroup decay of the noiseless linear flow, the discrete energy
identity ||w'||^2 = ||w||^2 - 2 dt <B, w> + dt^2 ||B||^2 at gamma = 0, and
the fact that the linearized step is the exact Jacobian of the main step
(so finite differences converge at first order in h).
"""

import math

import numpy as np
import pytest

from felab.dynamics import (
    BlowUpError,
    CHECKPOINT_MAGIC,
    CheckpointError,
    FrozenFlow,
    SimParams,
    TrajectoryState,
    bilinear_B,
    fresh_state,
    lambda_N,
    load_checkpoint,
    save_checkpoint,
    step_control,
    step_linearized,
    step_main,
    step_shifted,
)
from felab.forcing import ForcingConfig, build_basis, ou_exact_step
from felab.spectral import (
    Grid2D,
    GridError,
    SpectralField,
    inner_l2,
    sobolev_norm,
    to_physical,
)
from conftest import random_field

BALL2 = ForcingConfig.ball(2, decay=1.0, amplitude=0.5)


def single_mode(grid, k, amp=1.0):
    return SpectralField.from_modes(grid, {k: -0.5j * amp})  # amp sin(k.x)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            SimParams(gamma=2.5)
        with pytest.raises(ValueError):
            SimParams(gamma=-0.1)
        with pytest.raises(ValueError):
            SimParams(gamma=1.0, r=2.0)
        with pytest.raises(ValueError):
            SimParams(gamma=1.0, dt=0.0)
        SimParams(gamma=0.0)  # documented dissipation-off switch

    def test_n_steps(self):
        assert SimParams(gamma=1.0, dt=0.1, T=2.0).n_steps == 20

    def test_advective_cfl(self):
        p = SimParams(gamma=1.0, n=64)
        assert abs(p.advective_cfl(2.0) - (2 * math.pi / 64) / 2.0) < 1e-15


class TestBilinear:
    def test_two_mode_oracle(self, grid32):
        # u(sin x1) = (0, -cos x1); (u . grad) sin x2 = -cos x1 cos x2
        f = single_mode(grid32, (1, 0))
        g = single_mode(grid32, (0, 1))
        b = bilinear_B(f, g)
        x1, x2 = grid32.meshes()
        assert np.abs(to_physical(b) + np.cos(x1) * np.cos(x2)).max() < 1e-13

    def test_zero_second_argument(self, grid32):
        f = random_field(grid32, seed=3)
        b = bilinear_B(f, SpectralField.zeros(grid32))
        assert np.abs(b.coeffs).max() == 0.0

    def test_single_mode_self_advection_vanishes(self, grid32):
        f = single_mode(grid32, (2, 1), amp=1.5)
        b = bilinear_B(f, f)
        assert np.abs(b.coeffs).max() < 1e-15

    def test_transport_cancellation(self, grid64):
        # <B(w, w), w> = 0: divergence-free transport moves enstrophy around
        w = random_field(grid64, seed=41, band=20, amplitude=1.0)
        b = bilinear_B(w, w)
        l2 = sobolev_norm(w, 0.0)
        assert abs(inner_l2(b, w)) < 1e-8 * l2**3

    def test_p_moment_cancellation(self, grid64):
        # <B(w, w), w^{p-1}> = 0 for even p when the quadrature resolves
        # band(B) + (p-1) band(w)
        w = random_field(grid64, seed=43, band=6, amplitude=1.0)
        b = bilinear_B(w, w)
        for p in (4, 6):
            vals = to_physical(w) ** (p - 1)
            quad = float((to_physical(b) * vals).mean() * (2 * np.pi) ** 2)
            scale = sobolev_norm(w, 1.0) ** 2 * max(1.0, np.abs(vals).max())
            assert abs(quad) < 1e-6 * scale

    def test_grid_mismatch(self, grid32, grid64):
        with pytest.raises(GridError):
            bilinear_B(SpectralField.zeros(grid32), SpectralField.zeros(grid64))

    def test_output_dealiased(self, grid32):
        f = random_field(grid32, seed=5)
        b = bilinear_B(f, f)
        outside = b.coeffs * (1.0 - grid32.dealias_mask)
        assert np.abs(outside).max() == 0.0


class TestMainStep:
    def test_exact_linear_decay(self, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.01)
        state = fresh_state(params, omega=single_mode(grid32, (3, 4)))  # |k| = 5
        for _ in range(200):
            state = step_main(state, params, advect=False)
        want = math.exp(-(5.0**0.5) * 0.01 * 200)
        got = -2.0 * state.omega.coeffs[3, 4].imag
        assert abs(got - want) < 1e-12

    def test_single_mode_with_advection_still_exact(self, grid32):
        # B vanishes on a single mode, so advect=True must not disturb decay
        params = SimParams(gamma=1.0, n=32, dt=0.01)
        state = fresh_state(params, omega=single_mode(grid32, (1, 0)))
        for _ in range(100):
            state = step_main(state, params)
        want = math.exp(-1.0)
        got = -2.0 * state.omega.coeffs[1, 0].imag
        assert abs(got - want) < 1e-12

    def test_discrete_energy_identity_gamma_zero(self, grid32):
        # ||w'||^2 - ||w||^2 + 2 dt <B, w> - dt^2 ||B||^2 = 0 exactly
        params = SimParams(gamma=0.0, n=32, dt=1e-3)
        w = random_field(grid32, seed=11, band=8, amplitude=0.5)
        state = fresh_state(params, omega=w)
        b = bilinear_B(w, w)
        new = step_main(state, params).omega
        lhs = sobolev_norm(new, 0.0) ** 2 - sobolev_norm(w, 0.0) ** 2
        rhs = -2 * params.dt * inner_l2(b, w) + params.dt**2 * sobolev_norm(b, 0.0) ** 2
        assert abs(lhs - rhs) < 1e-12 * sobolev_norm(w, 0.0) ** 2

    def test_euler_conservation_richardson(self, grid32):
        # gamma = 0, no noise: L2 norm conserved as dt -> 0, drift O(dt)
        omega0 = SpectralField.from_modes(
            grid32,
            {(1, 0): -0.005j, (0, 1): 0.005, (1, 1): -0.004j, (2, -1): 0.003},
        )
        base = sobolev_norm(omega0, 0.0)

        def drift(dt):
            params = SimParams(gamma=0.0, n=32, dt=dt, T=1.0)
            state = fresh_state(params, omega=omega0)
            for _ in range(params.n_steps):
                state = step_main(state, params)
            return abs(sobolev_norm(state.omega, 0.0) - base) / base

        d1, d2 = drift(1e-3), drift(5e-4)
        assert d1 < 1e-6
        assert 1.4 < d1 / d2 < 2.8  # first order in dt

    def test_energy_identity_order(self, grid32):
        # residual of d||w||^2/dt = -2||L^{g/2} w||^2 over one step is O(dt)
        w = random_field(grid32, seed=19, band=8, amplitude=0.5)
        diss = -2.0 * sobolev_norm(w, 0.25) ** 2  # gamma/2 = 0.25

        def residual(dt):
            params = SimParams(gamma=0.5, n=32, dt=dt)
            new = step_main(fresh_state(params, omega=w), params).omega
            rate = (sobolev_norm(new, 0.0) ** 2 - sobolev_norm(w, 0.0) ** 2) / dt
            return abs(rate - diss)

        r1, r2 = residual(1e-3), residual(5e-4)
        order = math.log2(r1 / r2)
        assert order > 0.9

    def test_deterministic_given_seed(self, grid32):
        params = SimParams(gamma=1.0, n=32, dt=0.01, seed=7)
        basis = build_basis(BALL2, grid32)

        def run():
            state = fresh_state(params, basis=basis)
            for _ in range(50):
                state = step_main(state, params, basis)
            return state.omega.coeffs

        assert np.array_equal(run(), run())

    def test_different_trajectory_ids_differ(self, grid32):
        params = SimParams(gamma=1.0, n=32, dt=0.01, seed=7)
        basis = build_basis(BALL2, grid32)
        outs = []
        for tid in (0, 1):
            state = fresh_state(params, basis=basis, trajectory_id=tid)
            for _ in range(10):
                state = step_main(state, params, basis)
            outs.append(state.omega.coeffs)
        assert not np.array_equal(outs[0], outs[1])

    def test_weak_order_sanity(self, grid32):
        # ensemble mean of ||w(T)||^2 stable under dt halving within the
        # 95% Monte Carlo bar
        basis = build_basis(BALL2, grid32)
        T, n_paths = 0.8, 32

        def ensemble(dt, seed):
            params = SimParams(gamma=1.0, n=32, dt=dt, T=T, seed=seed)
            vals = np.empty(n_paths)
            for tid in range(n_paths):
                state = fresh_state(params, basis=basis, trajectory_id=tid)
                for _ in range(params.n_steps):
                    state = step_main(state, params, basis)
                vals[tid] = sobolev_norm(state.omega, 0.0) ** 2
            return vals

        a = ensemble(0.04, seed=100)
        b = ensemble(0.02, seed=200)
        bar = 1.96 * math.sqrt(a.var(ddof=1) / n_paths + b.var(ddof=1) / n_paths)
        assert abs(a.mean() - b.mean()) < bar

    def test_blowup_guard_norm(self, grid32):
        params = SimParams(gamma=1.0, n=32, dt=0.01, blowup_bound=1.0)
        state = fresh_state(params, omega=single_mode(grid32, (1, 0), amp=10.0))
        with pytest.raises(BlowUpError):
            step_main(state, params)

    def test_blowup_guard_nonfinite(self, grid32):
        params = SimParams(gamma=1.0, n=32, dt=0.01)
        c = np.zeros((32, 17), dtype=np.complex128)
        c[1, 0] = np.nan
        state = TrajectoryState(0.0, SpectralField(grid32, c), 0, None)
        with pytest.raises(BlowUpError):
            step_main(state, params)

    def test_forced_step_needs_stream(self, grid32):
        params = SimParams(gamma=1.0, n=32)
        basis = build_basis(BALL2, grid32)
        state = TrajectoryState(0.0, SpectralField.zeros(grid32), 0, None)
        with pytest.raises(ValueError):
            step_main(state, params, basis)

    def test_grid_mismatch(self, grid64):
        params = SimParams(gamma=1.0, n=32)
        state = TrajectoryState(0.0, SpectralField.zeros(grid64), 0, None)
        with pytest.raises(GridError):
            step_main(state, params)


class TestLinearized:
    def test_zero_state_pure_heat(self, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.02)
        rho = single_mode(grid32, (3, 4))
        out = step_linearized(rho, SpectralField.zeros(grid32), params)
        want = math.exp(-(5.0**0.5) * 0.02)
        assert np.abs(out.coeffs - want * rho.coeffs).max() < 1e-14

    def test_exact_linearity(self, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.01)
        omega = random_field(grid32, seed=51, band=8)
        ctx = FrozenFlow(omega)
        r1 = random_field(grid32, seed=52, band=8)
        r2 = random_field(grid32, seed=53, band=8)
        a, b = 2.5, -1.25
        lhs = step_linearized(a * r1 + b * r2, omega, params, ctx)
        rhs = a * step_linearized(r1, omega, params, ctx) + b * step_linearized(
            r2, omega, params, ctx
        )
        scale = np.abs(lhs.coeffs).max()
        assert np.abs(lhs.coeffs - rhs.coeffs).max() < 1e-12 * max(1.0, scale)

    def test_ctx_matches_fresh(self, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.01)
        omega = random_field(grid32, seed=54, band=8)
        rho = random_field(grid32, seed=55, band=8)
        a = step_linearized(rho, omega, params)
        b = step_linearized(rho, omega, params, FrozenFlow(omega))
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_finite_difference_first_order(self, grid32):
        # the linearized step is the exact Jacobian of the noiseless main
        # step, so the FD quotient converges at order one in h
        params = SimParams(gamma=0.5, n=32, dt=0.01, T=0.2)
        omega0 = random_field(grid32, seed=61, band=8, amplitude=0.3)
        xi = random_field(grid32, seed=62, band=8, amplitude=1.0)

        def flow(start):
            state = fresh_state(params, omega=start)
            for _ in range(params.n_steps):
                state = step_main(state, params)
            return state.omega

        base = flow(omega0)
        rho = xi
        state = fresh_state(params, omega=omega0)
        for _ in range(params.n_steps):
            rho = step_linearized(rho, state.omega, params)
            state = step_main(state, params)

        errs = []
        for h in (1e-3, 1e-4):
            fd = (1.0 / h) * (flow(omega0 + h * xi) - base)
            errs.append(sobolev_norm(fd - rho, 0.0))
        order = math.log10(errs[0] / errs[1])
        assert order > 0.9


class TestControl:
    def test_exact_combined_decay(self, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.02)
        zero = SpectralField.zeros(grid32)
        rho = single_mode(grid32, (1, 0))
        out, _ = step_control(rho, zero, 2, params)
        want = math.exp(-(1.0 + 2.0**0.5) * 0.02)  # |k|^g + N^g
        assert abs(out.coeffs[1, 0] / rho.coeffs[1, 0] - want) < 1e-14

    def test_modes_above_cutoff_undamped(self, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.02)
        zero = SpectralField.zeros(grid32)
        rho = single_mode(grid32, (0, 3))  # |k| = 3 > N = 2
        out, _ = step_control(rho, zero, 2, params)
        want = math.exp(-(3.0**0.5) * 0.02)
        assert abs(out.coeffs[0, 3] / rho.coeffs[0, 3] - want) < 1e-14

    def test_n_zero_is_linearized_bitwise(self, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.01)
        omega = random_field(grid32, seed=71, band=8)
        rho = random_field(grid32, seed=72, band=8)
        ctx = FrozenFlow(omega)
        a = step_linearized(rho, omega, params, ctx)
        b, pn = step_control(rho, omega, 0, params, ctx)
        assert np.array_equal(a.coeffs, b.coeffs)
        assert pn == 0.0

    def test_pn_norm_reported(self, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.01)
        rho = single_mode(grid32, (1, 0), amp=3.0)
        _, pn = step_control(rho, SpectralField.zeros(grid32), 4, params)
        assert abs(pn - 3.0 * math.sqrt(2 * math.pi**2)) < 1e-12

    def test_validation(self, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.01)
        zero = SpectralField.zeros(grid32)
        with pytest.raises(ValueError):
            step_control(zero, zero, -1, params)
        with pytest.raises(GridError):
            step_control(zero, zero, 11, params)  # cutoff 10 at n=32

    def test_lambda_convention(self):
        assert lambda_N(1) == 1.0
        assert lambda_N(4) ** (1.0 / 2.0) == 4.0  # gamma = 1
        assert lambda_N(3) ** (2.0 / 2.0) == 9.0  # gamma = 2
        with pytest.raises(ValueError):
            lambda_N(0)


class TestShifted:
    def test_zero_fixed_point(self, grid32):
        params = SimParams(gamma=1.0, n=32, dt=0.01)
        zero = SpectralField.zeros(grid32)
        out = step_shifted(zero, zero, params)
        assert np.abs(out.coeffs).max() == 0.0

    def test_unforced_energy_decay(self, grid32):
        params = SimParams(gamma=1.0, n=32, dt=0.01)
        wbar = random_field(grid32, seed=81, band=8, amplitude=0.5)
        zero = SpectralField.zeros(grid32)
        norms = [sobolev_norm(wbar, 0.0)]
        for _ in range(50):
            wbar = step_shifted(wbar, zero, params)
            norms.append(sobolev_norm(wbar, 0.0))
        assert all(b <= a + 1e-15 for a, b in zip(norms, norms[1:]))

    def test_shift_reconstructs_main_trajectory(self, grid32):
        # wbar + Z and the main run share increments; agreement to near
        # machine precision over a hundred steps
        params = SimParams(gamma=0.5, n=32, dt=0.01, seed=3)
        basis = build_basis(BALL2, grid32)
        omega0 = random_field(grid32, seed=91, band=8, amplitude=0.3)

        state = fresh_state(params, basis=basis, omega=omega0)
        wbar, Z = omega0, SpectralField.zeros(grid32)
        stream = state.stream
        for step in range(100):
            state = step_main(state, params, basis)
            wbar = step_shifted(wbar, Z, params)
            Z = ou_exact_step(Z, params.dt, stream.increments(step, params.dt),
                              params.gamma, basis)
        recon = wbar + Z
        diff = np.abs(recon.coeffs - state.omega.coeffs).max()
        assert diff < 1e-12

    def test_grid_mismatch(self, grid32, grid64):
        params = SimParams(gamma=1.0, n=32, dt=0.01)
        with pytest.raises(GridError):
            step_shifted(SpectralField.zeros(grid32), SpectralField.zeros(grid64),
                         params)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.01, seed=5)
        basis = build_basis(BALL2, grid32)
        state = fresh_state(params, basis=basis,
                            omega=random_field(grid32, seed=101, band=8))
        for _ in range(7):
            state = step_main(state, params, basis)
        path = tmp_path / "state.ckpt"
        save_checkpoint(path, state, params)
        loaded, header = load_checkpoint(path, BALL2)
        assert np.array_equal(loaded.omega.coeffs, state.omega.coeffs)
        assert loaded.step == state.step
        assert loaded.t == state.t
        assert loaded.stream.seed == state.stream.seed
        assert header["n"] == 32 and header["gamma"] == 0.5
        assert header["stream_position"] == state.step

    def test_byte_exact_rewrite(self, tmp_path, grid32):
        params = SimParams(gamma=1.5, n=32, dt=0.002, seed=9)
        state = fresh_state(params, omega=random_field(grid32, seed=103))
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, state, params)
        loaded, _ = load_checkpoint(p1)
        save_checkpoint(p2, loaded, params)
        assert p1.read_bytes() == p2.read_bytes()

    def test_resume_bit_identical(self, tmp_path, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.01, seed=13)
        basis = build_basis(BALL2, grid32)

        state = fresh_state(params, basis=basis)
        for _ in range(60):
            state = step_main(state, params, basis)
        straight = state.omega.coeffs

        state = fresh_state(params, basis=basis)
        for _ in range(30):
            state = step_main(state, params, basis)
        path = tmp_path / "mid.ckpt"
        save_checkpoint(path, state, params)
        resumed, _ = load_checkpoint(path, BALL2)
        for _ in range(30):
            resumed = step_main(resumed, params, basis)
        assert np.array_equal(resumed.omega.coeffs, straight)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.ckpt"
        p.write_bytes(b"NOTFES" + b"\x00" * 64)
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_truncated(self, tmp_path, grid32):
        params = SimParams(gamma=0.5, n=32, dt=0.01)
        state = fresh_state(params)
        p = tmp_path / "t.ckpt"
        save_checkpoint(p, state, params)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_magic_value(self):
        assert CHECKPOINT_MAGIC == b"FESIM1"
