"""Time stepping for the vorticity dynamics and its companion equations.

Four evolutions share one integrating-factor scheme (the linear semigroup is
diagonal in Fourier space, so stiffness is removed exactly for every
dissipation power):

  main        d omega + (Lambda^g omega + u.grad omega) dt = sigma dW
  linearized  d rho   + (Lambda^g rho + B(rho, omega) + B(omega, rho)) dt = 0
  control     linearized plus mode damping -lambda_N^{g/2} P_N rho
  shifted     d wbar  + (Lambda^g wbar + B(w, w)) dt = 0,  w = wbar + Z

B(f, g) = (K*f) . grad g is evaluated pseudo-spectrally with 2/3-rule
dealiasing. The stochastic term uses the exact one-step OU convolution, the
same discretization the OU sampler uses, so wbar + Z tracks a main
trajectory driven by the same increments to near machine precision.

gamma = 0 is accepted as a documented switch meaning dissipation OFF (pure
transport), used by conservation checks; it is not the multiplier |k|^0.
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .forcing import (
    ForcingBasis,
    ForcingConfig,
    NoiseStream,
    derive_stream_seed,
    dissipation_symbol,
    ou_kick,
)
from .spectral import (
    Grid2D,
    GridError,
    SpectralField,
    biot_savart,
    dealias,
    derivative,
    sobolev_norm,
    to_physical,
    to_spectral,
)

__all__ = [
    "SimParams",
    "TrajectoryState",
    "BlowUpError",
    "CheckpointError",
    "FrozenFlow",
    "bilinear_B",
    "step_main",
    "step_linearized",
    "step_control",
    "step_shifted",
    "lambda_N",
    "fresh_state",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]


class BlowUpError(RuntimeError):
    """Trajectory left the finite regime (non-finite values or norm bound)."""


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


@dataclass(frozen=True)
class SimParams:
    """Static parameters of one simulation.

    gamma is the dissipation power in (0, 2], or exactly 0 to switch
    dissipation off. r is the phase-space Sobolev index carried as metadata
    for observables. No CFL constraint comes from the dissipation (it is
    integrated exactly); ``advective_cfl`` gives the advective warning
    threshold.
    """

    gamma: float
    r: float = 2.5
    n: int = 64
    dt: float = 1e-3
    dealias: bool = True
    seed: int = 0
    T: float = 1.0
    blowup_bound: float = 1e6

    def __post_init__(self):
        if not (self.gamma == 0.0 or 0.0 < self.gamma <= 2.0):
            raise ValueError(f"gamma must lie in (0, 2] or be 0, got {self.gamma}")
        if self.r <= 2.0:
            raise ValueError(f"phase-space index r must exceed 2, got {self.r}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T <= 0.0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if self.blowup_bound <= 0.0:
            raise ValueError("blow-up bound must be positive")
        Grid2D.create(self.n)  # validates n early

    @property
    def grid(self) -> Grid2D:
        return Grid2D.create(self.n)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def advective_cfl(self, u_max: float) -> float:
        """Largest dt keeping u_max * dt below one grid cell."""
        return (2.0 * math.pi / self.n) / max(u_max, 1e-300)


@dataclass(frozen=True)
class TrajectoryState:
    """One trajectory at one instant; t = step * dt by construction."""

    t: float
    omega: SpectralField
    step: int
    stream: Optional[NoiseStream] = None


_factor_cache: Dict[Tuple[int, int, float, float, int], np.ndarray] = {}
_factor_lock = threading.Lock()


def _int_factor(grid: Grid2D, gamma: float, dt: float, n_damp: int) -> np.ndarray:
    """exp(-(|k|^gamma + lambda_N^{gamma/2} 1_{0<|k|<=N}) dt), cached."""
    key = (grid.n, grid.dealias_cutoff, gamma, dt, n_damp)
    with _factor_lock:
        fac = _factor_cache.get(key)
        if fac is None:
            rate = dissipation_symbol(grid, gamma)
            if n_damp > 0:
                shell = (grid.k_sq > 0) & (grid.k_abs <= n_damp)
                rate = rate + float(n_damp) ** gamma * shell
            fac = np.exp(-rate * dt)
            fac.flags.writeable = False
            _factor_cache[key] = fac
    return fac


def _guard(coeffs: np.ndarray, grid: Grid2D, bound: float, t: float,
           step: int) -> None:
    if not np.all(np.isfinite(coeffs)):
        raise BlowUpError(f"non-finite coefficients at t={t:.6g} (step {step})")
    l2 = sobolev_norm(SpectralField(grid, coeffs), 0.0)
    if l2 > bound:
        raise BlowUpError(
            f"L2 norm {l2:.3e} exceeded bound {bound:.3e} at t={t:.6g} "
            f"(step {step})"
        )


def bilinear_B(f: SpectralField, g: SpectralField,
               use_dealias: bool = True) -> SpectralField:
    """B(f, g) = (K*f) . grad g, dealiased and mean-zero.

    Pseudo-spectral: velocity of f via Biot-Savart, gradient of g, pointwise
    product on the grid, transform back, 2/3-rule cut.
    """
    if f.grid != g.grid:
        raise GridError(f"grid mismatch: {f.grid} vs {g.grid}")
    u1, u2 = biot_savart(f)
    term = (
        to_physical(u1) * to_physical(derivative(g, 0))
        + to_physical(u2) * to_physical(derivative(g, 1))
    )
    out = to_spectral(f.grid, term)
    return dealias(out) if use_dealias else out


class FrozenFlow:
    """Physical-space velocity and vorticity gradient of a frozen state.

    The linearized and control equations freeze omega over a step; building
    this once lets many directions rho share the transforms.
    """

    __slots__ = ("grid", "u1", "u2", "grad1", "grad2")

    def __init__(self, omega: SpectralField):
        self.grid = omega.grid
        u1, u2 = biot_savart(omega)
        self.u1 = to_physical(u1)
        self.u2 = to_physical(u2)
        self.grad1 = to_physical(derivative(omega, 0))
        self.grad2 = to_physical(derivative(omega, 1))


def _linear_step(rho: SpectralField, ctx: FrozenFlow, params: SimParams,
                 n_damp: int) -> SpectralField:
    """Shared core of the linearized and control steps."""
    grid = rho.grid
    v1, v2 = biot_savart(rho)
    integrand = (
        to_physical(v1) * ctx.grad1
        + to_physical(v2) * ctx.grad2
        + ctx.u1 * to_physical(derivative(rho, 0))
        + ctx.u2 * to_physical(derivative(rho, 1))
    )
    b = to_spectral(grid, integrand)
    if params.dealias:
        b = dealias(b)
    fac = _int_factor(grid, params.gamma, params.dt, n_damp)
    new = fac * (rho.coeffs - params.dt * b.coeffs)
    _guard(new, grid, params.blowup_bound, math.nan, -1)
    return SpectralField(grid, new)


def step_main(state: TrajectoryState, params: SimParams,
              basis: Optional[ForcingBasis] = None,
              advect: bool = True) -> TrajectoryState:
    """One exponential Euler-Maruyama step of the main equation.

    omega_hat <- e^{-|k|^gamma dt} (omega_hat - dt B_hat) + OU kick on the
    forced modes. Deterministic given (stream seed, step index); basis=None
    runs the unforced equation.
    """
    grid = state.omega.grid
    if grid.n != params.n:
        raise GridError(f"state grid n={grid.n} does not match params n={params.n}")
    omega = state.omega
    fac = _int_factor(grid, params.gamma, params.dt, 0)
    if advect:
        b = bilinear_B(omega, omega, use_dealias=params.dealias)
        drift = omega.coeffs - params.dt * b.coeffs
    else:
        drift = omega.coeffs
    new = fac * drift
    if basis is not None:
        if state.stream is None:
            raise ValueError("forced step needs a noise stream on the state")
        inc = state.stream.increments(state.step, params.dt)
        new = new + ou_kick(basis, params.dt, inc, params.gamma).coeffs
    step = state.step + 1
    t = step * params.dt
    _guard(new, grid, params.blowup_bound, t, step)
    return TrajectoryState(t=t, omega=SpectralField(grid, new), step=step,
                           stream=state.stream)


def step_linearized(rho: SpectralField, omega: SpectralField,
                    params: SimParams,
                    ctx: Optional[FrozenFlow] = None) -> SpectralField:
    """One step of the first variation along a frozen trajectory state.

    Exactly linear in rho. Pass a FrozenFlow built from omega when stepping
    several directions against the same state.
    """
    if ctx is None:
        ctx = FrozenFlow(omega)
    return _linear_step(rho, ctx, params, n_damp=0)


def lambda_N(N: int) -> float:
    """Damping eigenvalue convention: the N-shell eigenvalue of -Delta, N^2."""
    if N < 1:
        raise ValueError(f"shell radius must be >= 1, got {N}")
    return float(N * N)


def step_control(rho: SpectralField, omega: SpectralField, N: int,
                 params: SimParams,
                 ctx: Optional[FrozenFlow] = None
                 ) -> Tuple[SpectralField, float]:
    """Linearized step with damping -lambda_N^{gamma/2} P_N rho folded in.

    Returns the new rho and ||P_N rho|| of the incoming state (the
    integrand of the stochastic-integral budget). N = 0 means no damping
    and reduces bit-identically to step_linearized.
    """
    if N < 0:
        raise ValueError(f"damping cutoff must be >= 0, got {N}")
    if N > rho.grid.dealias_cutoff:
        raise GridError(
            f"damping cutoff {N} exceeds grid cutoff {rho.grid.dealias_cutoff}"
        )
    if ctx is None:
        ctx = FrozenFlow(omega)
    g = rho.grid
    if N > 0:
        shell = (g.k_sq > 0) & (g.k_abs <= N)
        pn_sq = np.sum(shell * g.parseval_weight * np.abs(rho.coeffs) ** 2)
        pn_norm = float(math.sqrt((2.0 * math.pi) ** 2 * pn_sq))
    else:
        pn_norm = 0.0
    return _linear_step(rho, ctx, params, n_damp=N), pn_norm


def step_shifted(wbar: SpectralField, Z: SpectralField,
                 params: SimParams) -> SpectralField:
    """One step of the OU-shifted equation.

    With w = wbar + Z the two nonlinear terms collapse to B(w, w), computed
    once. Advancing Z by ou_exact_step with the same increments makes
    wbar + Z track the main trajectory.
    """
    if wbar.grid != Z.grid:
        raise GridError("shifted state and OU state live on different grids")
    w = wbar + Z
    b = bilinear_B(w, w, use_dealias=params.dealias)
    fac = _int_factor(wbar.grid, params.gamma, params.dt, 0)
    new = fac * (wbar.coeffs - params.dt * b.coeffs)
    _guard(new, wbar.grid, params.blowup_bound, math.nan, -1)
    return SpectralField(wbar.grid, new)


def fresh_state(params: SimParams, basis: Optional[ForcingBasis] = None,
                omega: Optional[SpectralField] = None,
                trajectory_id: int = 0) -> TrajectoryState:
    """Initial state at t = 0 with a per-trajectory noise stream."""
    if omega is None:
        omega = SpectralField.zeros(params.grid)
    if omega.grid != params.grid:
        raise GridError("initial state grid does not match params")
    if params.dealias:
        omega = dealias(omega)
    stream = None
    if basis is not None:
        seed = derive_stream_seed(params.seed, trajectory_id)
        stream = NoiseStream(seed, len(basis.config.modes))
    return TrajectoryState(t=0.0, omega=omega, step=0, stream=stream)


CHECKPOINT_MAGIC = b"FESIM1"
_HEADER = struct.Struct("<QddQQQ")


def save_checkpoint(path, state: TrajectoryState, params: SimParams) -> None:
    """Magic + (n, gamma, dt, step, seed, stream position) + raw coefficients.

    All header fields little-endian 64-bit; coefficients complex128
    row-major. The stream position equals the step index because increments
    are a pure function of (seed, step).
    """
    seed = state.stream.seed if state.stream is not None else int(params.seed)
    header = _HEADER.pack(params.n, params.gamma, params.dt,
                          state.step, seed, state.step)
    body = np.ascontiguousarray(state.omega.coeffs, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(header)
        fh.write(body)


def load_checkpoint(path, forcing_config: Optional[ForcingConfig] = None
                    ) -> Tuple[TrajectoryState, dict]:
    """Rebuild a trajectory state; byte-exact inverse of save_checkpoint.

    A forcing config is needed to revive the noise stream (the header only
    stores the seed); without one the state is loaded noiseless.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic in {path}")
    off = len(CHECKPOINT_MAGIC)
    try:
        n, gamma, dt, step, seed, pos = _HEADER.unpack_from(raw, off)
    except struct.error as exc:
        raise CheckpointError(f"truncated header in {path}") from exc
    body = raw[off + _HEADER.size:]
    want = n * (n // 2 + 1) * 16
    if len(body) != want:
        raise CheckpointError(
            f"coefficient block has {len(body)} bytes, expected {want}"
        )
    grid = Grid2D.create(int(n))
    coeffs = np.frombuffer(body, dtype="<c16").reshape(n, n // 2 + 1)
    omega = SpectralField(grid, coeffs.astype(np.complex128))
    stream = None
    if forcing_config is not None:
        stream = NoiseStream(int(seed), len(forcing_config.modes))
    state = TrajectoryState(t=step * dt, omega=omega, step=int(step),
                            stream=stream)
    header = {"n": int(n), "gamma": gamma, "dt": dt, "step": int(step),
              "seed": int(seed), "stream_position": int(pos)}
    return state, header
