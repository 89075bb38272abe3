"""Degenerate additive noise on finitely many Fourier modes.

The forced set Z is a finite symmetric subset of the integer lattice minus
the origin. Each k in Z carries its own scalar Brownian motion and the real
basis field

    e_k = sin(k.x)  for k in the positive half-lattice (k2 > 0, or k2 = 0
                    and k1 > 0),
    e_k = cos(k.x)  otherwise,

so sigma dW = sum_k q_k e_k dW^k is real for every realization. The adjoint
map sigma_* uses the normalized pairing <e_k, e_k> = 1 (plain L^2 divided by
2 pi^2), which makes sigma sigma_* the orthogonal projection onto span{e_k}.

Sampling is counter-based: one Philox stream per trajectory, one disjoint
counter block per time step, so increments are a pure function of
(seed, step index) and checkpoint replay is bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Tuple

import numpy as np

from .spectral import Grid2D, GridError, SpectralField

__all__ = [
    "ForcingConfig",
    "ForcingError",
    "ForcingBasis",
    "NoiseRealization",
    "NoiseStream",
    "build_basis",
    "sigma_hs_norm",
    "sigma_lp_norm",
    "sample_increments",
    "noise_field",
    "sigma_star",
    "apply_sigma",
    "ou_exact_step",
    "ou_kick",
    "dissipation_symbol",
    "derive_stream_seed",
]

Mode = Tuple[int, int]


class ForcingError(ValueError):
    """Invalid forcing configuration."""


def _is_positive_half(k: Mode) -> bool:
    return k[1] > 0 or (k[1] == 0 and k[0] > 0)


@dataclass(frozen=True)
class ForcingConfig:
    """Forced-mode set Z and amplitudes q_k, in canonical sorted order."""

    modes: Tuple[Mode, ...]
    amplitudes: Tuple[float, ...]

    def __post_init__(self):
        if not self.modes:
            raise ForcingError("forced-mode set is empty")
        if len(self.modes) != len(self.amplitudes):
            raise ForcingError("modes and amplitudes length mismatch")
        seen = set(self.modes)
        if len(seen) != len(self.modes):
            raise ForcingError("duplicate forced mode")
        for (k1, k2), q in zip(self.modes, self.amplitudes):
            if k1 == 0 and k2 == 0:
                raise ForcingError("zero mode cannot be forced")
            if (-k1, -k2) not in seen:
                raise ForcingError(f"mode set not symmetric: missing {(-k1, -k2)}")
            if not (q != 0.0 and math.isfinite(q)):
                raise ForcingError(f"amplitude for {(k1, k2)} must be nonzero finite")

    @classmethod
    def explicit(cls, amplitudes: Mapping[Mode, float]) -> "ForcingConfig":
        items = sorted((tuple(int(c) for c in k), float(q))
                       for k, q in amplitudes.items())
        return cls(tuple(k for k, _ in items), tuple(q for _, q in items))

    @classmethod
    def ball(cls, n_force: int, decay: float = 1.0,
             amplitude: float = 1.0) -> "ForcingConfig":
        """All modes 0 < |k| <= n_force with radial profile q_k = A |k|^-decay."""
        if n_force < 1:
            raise ForcingError(f"forcing radius must be >= 1, got {n_force}")
        amps: Dict[Mode, float] = {}
        for k1 in range(-n_force, n_force + 1):
            for k2 in range(-n_force, n_force + 1):
                r2 = k1 * k1 + k2 * k2
                if 0 < r2 <= n_force * n_force:
                    amps[(k1, k2)] = amplitude * r2 ** (-decay / 2.0)
        return cls.explicit(amps)

    @property
    def max_mode(self) -> int:
        return max(max(abs(k1), abs(k2)) for k1, k2 in self.modes)

    def to_dict(self) -> dict:
        return {
            "modes": [list(k) for k in self.modes],
            "amplitudes": list(self.amplitudes),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ForcingConfig":
        """Accepts either a ball spec or an explicit mode list."""
        if "n_force" in data:
            return cls.ball(
                int(data["n_force"]),
                decay=float(data.get("decay", 1.0)),
                amplitude=float(data.get("amplitude", 1.0)),
            )
        modes = [tuple(int(c) for c in k) for k in data["modes"]]
        return cls.explicit(dict(zip(modes, map(float, data["amplitudes"]))))


@dataclass(frozen=True)
class NoiseRealization:
    """Per-mode Brownian increments for one step, aligned with config order."""

    dw: np.ndarray
    dt: float
    step: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ForcingError(f"dt must be positive, got {self.dt}")


class NoiseStream:
    """Gaussian increments as a pure function of (seed, step index).

    Each step draws from a disjoint 2^64-aligned Philox counter block, so
    replaying any step of any trajectory needs only the seed.
    """

    __slots__ = ("seed", "n_modes", "_key")

    def __init__(self, seed: int, n_modes: int):
        if n_modes < 1:
            raise ForcingError("stream needs at least one mode")
        self.seed = int(seed)
        self.n_modes = int(n_modes)
        words = np.random.SeedSequence(self.seed).generate_state(2, np.uint64)
        self._key = int(words[0]) | (int(words[1]) << 64)

    def increments(self, step: int, dt: float) -> NoiseRealization:
        if step < 0:
            raise ForcingError(f"step index must be >= 0, got {step}")
        gen = np.random.Generator(
            np.random.Philox(key=self._key, counter=step << 64)
        )
        dw = gen.standard_normal(self.n_modes) * math.sqrt(dt)
        return NoiseRealization(dw=dw, dt=dt, step=step)


def derive_stream_seed(root_seed: int, trajectory_id: int) -> int:
    """Stable per-trajectory seed; independent streams for an ensemble."""
    ss = np.random.SeedSequence(int(root_seed), spawn_key=(int(trajectory_id),))
    return int(ss.generate_state(1, np.uint64)[0])


class ForcingBasis:
    """The fields sigma_k = q_k e_k realized on a grid.

    Precomputes, per mode, the rfft2 slot of its half-lattice representative
    and the coefficient factor (-i/2 for sin, 1/2 for cos), so assembling
    sum_k v_k sigma_k and reading sigma_* are vectorized. k2 = 0 modes also
    write their conjugate-partner slot.
    """

    __slots__ = (
        "config", "grid", "q", "k_abs", "_rows", "_cols", "_factor",
        "_is_sin", "_col0", "_col0_conj_rows", "fields",
    )

    def __init__(self, config: ForcingConfig, grid: Grid2D):
        self.config = config
        self.grid = grid
        if config.max_mode > grid.dealias_cutoff:
            raise GridError(
                f"forced mode reaches {config.max_mode}, beyond the dealias "
                f"cutoff {grid.dealias_cutoff} of {grid}"
            )
        m = len(config.modes)
        n = grid.n
        self.q = np.asarray(config.amplitudes, dtype=np.float64)
        self.k_abs = np.array(
            [math.hypot(k1, k2) for k1, k2 in config.modes], dtype=np.float64
        )
        self._rows = np.empty(m, dtype=np.int64)
        self._cols = np.empty(m, dtype=np.int64)
        self._factor = np.empty(m, dtype=np.complex128)
        self._is_sin = np.empty(m, dtype=bool)
        for i, k in enumerate(config.modes):
            sin = _is_positive_half(k)
            kp = k if sin else (-k[0], -k[1])
            self._rows[i] = kp[0] % n
            self._cols[i] = kp[1]
            self._factor[i] = -0.5j if sin else 0.5
            self._is_sin[i] = sin
        self._col0 = self._cols == 0
        self._col0_conj_rows = (n - self._rows[self._col0]) % n
        self.fields: List[SpectralField] = [
            self._assemble(np.eye(m)[i]) for i in range(m)
        ]

    def _assemble(self, weights: np.ndarray) -> SpectralField:
        """sum_k weights_k sigma_k as a spectral field."""
        g = self.grid
        c = np.zeros((g.n, g.n // 2 + 1), dtype=np.complex128)
        contrib = self._factor * (self.q * weights)
        np.add.at(c, (self._rows, self._cols), contrib)
        np.add.at(c, (self._col0_conj_rows, np.int64(0)),
                  np.conj(contrib[self._col0]))
        return SpectralField(g, c)

    def noise_field(self, inc: NoiseRealization) -> SpectralField:
        if inc.dw.shape != (len(self.config.modes),):
            raise ForcingError("increment vector does not match mode set")
        return self._assemble(inc.dw)

    def apply_sigma(self, vec: np.ndarray) -> SpectralField:
        return self._assemble(np.asarray(vec, dtype=np.float64))

    def sigma_star(self, omega: SpectralField) -> np.ndarray:
        """(sigma_* omega)_k = <omega, e_k> / q_k with <e_k, e_k> = 1."""
        if omega.grid != self.grid:
            raise GridError("field grid does not match basis grid")
        vals = omega.coeffs[self._rows, self._cols]
        comp = np.where(self._is_sin, -2.0 * vals.imag, 2.0 * vals.real)
        return comp / self.q

    def project(self, omega: SpectralField) -> SpectralField:
        """Orthogonal projection onto the forced span, sigma sigma_* omega."""
        return self.apply_sigma(self.sigma_star(omega))


def build_basis(config: ForcingConfig, grid: Grid2D) -> ForcingBasis:
    return ForcingBasis(config, grid)


def sigma_hs_norm(config: ForcingConfig, s: float) -> float:
    """||sigma||_{H^s} = sqrt(sum_k q_k^2 |k|^{2s} 2 pi^2), evaluated exactly."""
    if s < 0:
        raise ValueError(f"Sobolev index must be >= 0, got {s}")
    total = sum(
        q * q * (k1 * k1 + k2 * k2) ** s
        for (k1, k2), q in zip(config.modes, config.amplitudes)
    )
    return math.sqrt(2.0 * math.pi**2 * total)


def sigma_lp_norm(config: ForcingConfig, p: float) -> float:
    """||sigma||_{L^p} = (integral (sum_k sigma_k^2)^{p/2} dx)^{1/p}.

    Quadrature on an internal grid wide enough that even p is exact
    (bandwidth of the integrand is max|k|1 * p); non-even p is approximate.
    """
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    band = int(math.ceil(config.max_mode * p)) + 2
    n = max(64, band + band % 2)
    grid = Grid2D.create(n)
    basis = ForcingBasis(config, grid)
    dens = np.zeros((n, n))
    for f in basis.fields:
        dens += f.to_physical() ** 2
    val = float((dens ** (p / 2.0)).mean() * (2.0 * np.pi) ** 2)
    return val ** (1.0 / p)


def sample_increments(stream: NoiseStream, step: int, dt: float) -> NoiseRealization:
    return stream.increments(step, dt)


def noise_field(basis: ForcingBasis, inc: NoiseRealization) -> SpectralField:
    """sigma dW for one realization: sum_k q_k e_k dW^k."""
    return basis.noise_field(inc)


def sigma_star(omega: SpectralField, basis: ForcingBasis) -> np.ndarray:
    return basis.sigma_star(omega)


def apply_sigma(vec: np.ndarray, basis: ForcingBasis) -> SpectralField:
    return basis.apply_sigma(vec)


def dissipation_symbol(grid: Grid2D, gamma: float) -> np.ndarray:
    """Dissipation eigenvalues |k|^gamma; gamma = 0 means dissipation OFF.

    The zero here is deliberate: gamma = 0 is the documented conservative
    (pure transport) switch, distinct from the multiplier |k|^0 = 1.
    """
    if gamma == 0.0:
        return np.zeros_like(grid.k_abs)
    k = np.where(grid.k_sq > 0, grid.k_abs, 1.0)
    return np.where(grid.k_sq > 0, k**gamma, 0.0)


def ou_kick(basis: ForcingBasis, dt: float, inc: NoiseRealization,
            gamma: float) -> SpectralField:
    """Exact one-step stochastic convolution integral e^{-(t-s)Lambda^g} sigma dW.

    Per forced mode a N(0, var) kick with var = (1 - e^{-2 lam dt}) / (2 lam),
    lam = |k|^gamma (lam = 0 gives the Brownian limit var = dt), built from
    the increments by rescaling to unit normals.
    """
    lam = basis.k_abs**gamma if gamma != 0.0 else np.zeros_like(basis.k_abs)
    safe = np.where(lam > 0, lam, 1.0)
    var = np.where(lam > 0, -np.expm1(-2.0 * safe * dt) / (2.0 * safe), dt)
    unit = inc.dw / math.sqrt(inc.dt)
    return basis._assemble(np.sqrt(var) * unit)


def ou_exact_step(Z: SpectralField, dt: float, inc: NoiseRealization,
                  gamma: float, basis: ForcingBasis) -> SpectralField:
    """One exact step of dZ + Lambda^gamma Z dt = sigma dW.

    The linear decay and the stochastic convolution are both exact in
    distribution, so the only error is statistical. Unforced modes decay
    deterministically.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if Z.grid != basis.grid:
        raise GridError("state grid does not match basis grid")
    lam = dissipation_symbol(Z.grid, gamma)
    decayed = Z.coeffs * np.exp(-lam * dt)
    return SpectralField(Z.grid, decayed + ou_kick(basis, dt, inc, gamma).coeffs)
