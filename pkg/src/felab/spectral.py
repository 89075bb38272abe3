"""Spectral substrate: grids, transforms, Fourier multipliers, Biot-Savart.

Everything lives on the periodic box [-pi, pi]^2 sampled on an n x n grid,
so wavenumbers are integer pairs k = (k1, k2). Real scalar fields are stored
by their complex Fourier coefficients in numpy's rfft2 layout, shape
(n, n//2 + 1), with k1 running over the signed fftfreq order along axis 0
and k2 = 0..n/2 along axis 1.

Normalization: the forward transform divides by n^2 and applies the phase
(-1)^(k1+k2), so coeffs(k) is the true coefficient c_k in
f(x) = sum_k c_k exp(i k.x) with samples starting at x = -pi. The map to the
real sin/cos basis on the positive half-lattice (k2 > 0, or k2 = 0 and
k1 > 0) is

    f = sum_k a_k sin(k.x) + b_k cos(k.x),
    a_k = -2 Im c_k,   b_k = 2 Re c_k.

L^p quadrature is the plain grid-point average times (2 pi)^2. This is exact
for band-limited integrands whose total bandwidth stays below n per axis
(in particular for even p with enough resolution margin); for large p or
unresolved fields it underreports the aliased part.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

__all__ = [
    "Grid2D",
    "GridError",
    "SpectralField",
    "MultiplierSymbol",
    "to_physical",
    "to_spectral",
    "apply_multiplier",
    "biot_savart",
    "curl",
    "derivative",
    "sobolev_norm",
    "lp_norm",
    "inner_l2",
    "dealias",
]


class GridError(ValueError):
    """Grid construction or grid-compatibility failure."""


class Grid2D:
    """Uniform n x n grid on [-pi, pi]^2 with integer wavenumbers.

    Precomputes the wavenumber meshes, |k|^2, the transform phase, the
    2/3-rule dealiasing mask and the Parseval column weights. Instances are
    immutable and cached per (n, dealias_cutoff); build them via ``create``.
    """

    __slots__ = (
        "n", "dealias_cutoff", "x", "k1", "k2", "kk1", "kk2", "k_sq",
        "k_abs", "inv_k_sq", "phase", "dealias_mask", "parseval_weight",
        "_col0_rows", "_col0_conj_rows",
    )

    _cache: Dict[Tuple[int, int], "Grid2D"] = {}
    _cache_lock = threading.Lock()

    def __init__(self, n: int, dealias_cutoff: int | None = None):
        if n < 8 or n % 2 != 0:
            raise GridError(f"grid size must be even and >= 8, got {n}")
        cutoff = n // 3 if dealias_cutoff is None else int(dealias_cutoff)
        if not 1 <= cutoff <= n // 2 - 1:
            raise GridError(f"dealias cutoff {cutoff} outside [1, {n // 2 - 1}]")
        self.n = n
        self.dealias_cutoff = cutoff
        self.x = -np.pi + 2.0 * np.pi * np.arange(n) / n
        self.k1 = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
        self.k2 = np.arange(n // 2 + 1, dtype=np.int64)
        self.kk1, self.kk2 = np.meshgrid(self.k1, self.k2, indexing="ij")
        self.k_sq = self.kk1 * self.kk1 + self.kk2 * self.kk2
        self.k_abs = np.sqrt(self.k_sq.astype(np.float64))
        safe = np.where(self.k_sq > 0, self.k_sq, 1).astype(np.float64)
        self.inv_k_sq = np.where(self.k_sq > 0, 1.0 / safe, 0.0)
        # samples start at -pi, numpy's FFT assumes 0: exp(-i k pi) = (-1)^k
        self.phase = np.where((self.kk1 + self.kk2) % 2 == 0, 1.0, -1.0)
        self.dealias_mask = (
            np.maximum(np.abs(self.kk1), self.kk2) <= cutoff
        ).astype(np.float64)
        w = np.full(self.k_sq.shape, 2.0)
        w[:, 0] = 1.0
        if n % 2 == 0:
            w[:, -1] = 1.0  # Nyquist column stored once
        self.parseval_weight = w
        rows = np.arange(1, n // 2, dtype=np.int64)
        self._col0_rows = rows
        self._col0_conj_rows = n - rows

    @classmethod
    def create(cls, n: int, dealias_cutoff: int | None = None) -> "Grid2D":
        key = (int(n), n // 3 if dealias_cutoff is None else int(dealias_cutoff))
        with cls._cache_lock:
            grid = cls._cache.get(key)
            if grid is None:
                grid = cls(n, dealias_cutoff)
                cls._cache[key] = grid
        return grid

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid2D)
            and self.n == other.n
            and self.dealias_cutoff == other.dealias_cutoff
        )

    def __hash__(self) -> int:
        return hash((self.n, self.dealias_cutoff))

    def __repr__(self) -> str:
        return f"Grid2D(n={self.n}, dealias_cutoff={self.dealias_cutoff})"

    def meshes(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical coordinate meshes (X1, X2), indexing='ij'."""
        return np.meshgrid(self.x, self.x, indexing="ij")

    def symmetrize(self, coeffs: np.ndarray) -> np.ndarray:
        """Project onto Hermitian-symmetric coefficients (in place).

        rfft2 output is consistent automatically; this is for hand-built
        coefficient arrays, where the k2 = 0 and k2 = n/2 columns carry both
        k and -k and must satisfy c(-k1) = conj(c(k1)).
        """
        for col in (0, self.n // 2):
            r, rc = self._col0_rows, self._col0_conj_rows
            mean = 0.5 * (coeffs[r, col] + np.conj(coeffs[rc, col]))
            coeffs[r, col] = mean
            coeffs[rc, col] = np.conj(mean)
            coeffs[0, col] = coeffs[0, col].real
            coeffs[self.n // 2, col] = coeffs[self.n // 2, col].real
        coeffs[0, 0] = 0.0
        return coeffs


def _check_same_grid(a: "SpectralField", b: "SpectralField") -> None:
    if a.grid != b.grid:
        raise GridError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Mean-zero real scalar on the torus, stored spectrally.

    Coefficients are Hermitian-symmetric so the inverse transform is real;
    the zero mode is identically 0. Instances are treated as immutable
    values: operations return new fields and never mutate ``coeffs``.
    """

    grid: Grid2D
    coeffs: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid2D) -> "SpectralField":
        return cls(grid, np.zeros((grid.n, grid.n // 2 + 1), dtype=np.complex128))

    @classmethod
    def from_coeffs(cls, grid: Grid2D, coeffs: np.ndarray) -> "SpectralField":
        """Copy, zero the mean and enforce Hermitian symmetry."""
        c = np.array(coeffs, dtype=np.complex128, copy=True)
        if c.shape != (grid.n, grid.n // 2 + 1):
            raise GridError(
                f"coefficient shape {c.shape} does not match grid n={grid.n}"
            )
        grid.symmetrize(c)
        return cls(grid, c)

    @classmethod
    def from_physical(cls, grid: Grid2D, values: np.ndarray) -> "SpectralField":
        return to_spectral(grid, values)

    @classmethod
    def from_modes(
        cls, grid: Grid2D, modes: Dict[Tuple[int, int], complex]
    ) -> "SpectralField":
        """Build a field from {k: c_k}; conjugate partners are implied.

        Modes must satisfy max(|k1|, |k2|) < n/2 so every partner has a
        distinct slot.
        """
        c = np.zeros((grid.n, grid.n // 2 + 1), dtype=np.complex128)
        n = grid.n
        for (k1, k2), val in modes.items():
            if k1 == 0 and k2 == 0:
                continue
            if k2 < 0 or (k2 == 0 and k1 < 0):
                k1, k2, val = -k1, -k2, np.conj(val)
            if max(abs(k1), k2) > n // 2 - 1:
                raise GridError(f"mode ({k1},{k2}) outside grid n={n}")
            c[k1 % n, k2] += val
            if k2 == 0:
                c[(-k1) % n, 0] += np.conj(val)
        grid.symmetrize(c)
        return cls(grid, c)

    def to_physical(self) -> np.ndarray:
        return to_physical(self)

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)


@dataclass(frozen=True)
class MultiplierSymbol:
    """Radial Fourier multiplier phi(|k|), applied per wavenumber.

    ``fn`` maps an array of |k| values (zero mode masked out by the caller)
    to multiplier values. The named constructors cover everything the
    dynamics and diagnostics need.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    @staticmethod
    def frac_laplacian(gamma: float) -> "MultiplierSymbol":
        """|k|^gamma. gamma = 0 is the identity on mean-zero fields."""
        if gamma < 0:
            raise ValueError(f"dissipation power must be >= 0, got {gamma}")
        return MultiplierSymbol(f"frac_laplacian({gamma})", lambda k: k ** gamma)

    @staticmethod
    def heat(gamma: float, t: float) -> "MultiplierSymbol":
        return MultiplierSymbol(
            f"heat({gamma},{t})", lambda k: np.exp(-(k ** gamma) * t)
        )

    @staticmethod
    def low_pass(n_cut: float) -> "MultiplierSymbol":
        return MultiplierSymbol(
            f"low_pass({n_cut})", lambda k: (k <= n_cut).astype(np.float64)
        )

    @staticmethod
    def high_pass(n_cut: float) -> "MultiplierSymbol":
        return MultiplierSymbol(
            f"high_pass({n_cut})", lambda k: (k > n_cut).astype(np.float64)
        )

    @staticmethod
    def sobolev(s: float) -> "MultiplierSymbol":
        return MultiplierSymbol(f"sobolev({s})", lambda k: k ** s)

    @staticmethod
    def log_weight(s: float) -> "MultiplierSymbol":
        """|k|^s sqrt(log|k|); vanishes at |k| = 1 since log 1 = 0."""
        return MultiplierSymbol(
            f"log_weight({s})", lambda k: k ** s * np.sqrt(np.log(k))
        )


def to_physical(f: SpectralField) -> np.ndarray:
    """Sample the field on the grid. Real by Hermitian symmetry."""
    g = f.grid
    return np.fft.irfft2(f.coeffs * g.phase * (g.n * g.n), s=(g.n, g.n))


def to_spectral(grid: Grid2D, values: np.ndarray) -> SpectralField:
    """Forward transform; projects out the mean."""
    if values.shape != (grid.n, grid.n):
        raise GridError(f"sample shape {values.shape} does not match n={grid.n}")
    c = np.fft.rfft2(values) * grid.phase / (grid.n * grid.n)
    c[0, 0] = 0.0
    return SpectralField(grid, c)


def apply_multiplier(f: SpectralField, sym: MultiplierSymbol) -> SpectralField:
    g = f.grid
    k = np.where(g.k_sq > 0, g.k_abs, 1.0)  # mask zero mode before phi
    mult = sym.fn(k)
    mult = np.where(g.k_sq > 0, mult, 0.0)
    return SpectralField(g, f.coeffs * mult)


def derivative(f: SpectralField, axis: int) -> SpectralField:
    """Spectral partial derivative along x1 (axis=0) or x2 (axis=1)."""
    g = f.grid
    k = g.kk1 if axis == 0 else g.kk2
    return SpectralField(g, 1j * k * f.coeffs)


def biot_savart(omega: SpectralField) -> Tuple[SpectralField, SpectralField]:
    """Velocity from vorticity: u_hat = i (k2, -k1) omega_hat / |k|^2.

    The sign makes the scalar curl come out right: with
    curl u = -d2 u1 + d1 u2 one gets curl u = omega, and k.u_hat = 0
    identically (k orthogonal to (k2, -k1)).
    """
    g = omega.grid
    t = 1j * omega.coeffs * g.inv_k_sq
    u1 = SpectralField(g, g.kk2 * t)
    u2 = SpectralField(g, -(g.kk1 * t))
    return u1, u2


def curl(u1: SpectralField, u2: SpectralField) -> SpectralField:
    """Scalar curl -d2 u1 + d1 u2."""
    _check_same_grid(u1, u2)
    g = u1.grid
    return SpectralField(g, 1j * (g.kk1 * u2.coeffs - g.kk2 * u1.coeffs))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """Parseval value of ||Lambda^s f||_{L^2}; s may be negative."""
    g = f.grid
    if s == 0.0:
        weight = np.where(g.k_sq > 0, 1.0, 0.0)
    else:
        k = np.where(g.k_sq > 0, g.k_abs, 1.0)
        weight = np.where(g.k_sq > 0, k ** (2.0 * s), 0.0)
    total = np.sum(weight * g.parseval_weight * np.abs(f.coeffs) ** 2)
    return float(np.sqrt((2.0 * np.pi) ** 2 * total))


def lp_norm(f: SpectralField, p: float) -> float:
    """(integral |f|^p dx)^(1/p) by grid-average quadrature."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    vals = np.abs(to_physical(f)) ** p
    return float((vals.mean() * (2.0 * np.pi) ** 2) ** (1.0 / p))


def inner_l2(f: SpectralField, g: SpectralField) -> float:
    """L^2 inner product integral f g dx via Parseval."""
    _check_same_grid(f, g)
    gr = f.grid
    s = np.sum(gr.parseval_weight * f.coeffs * np.conj(g.coeffs))
    return float((2.0 * np.pi) ** 2 * s.real)


def dealias(f: SpectralField) -> SpectralField:
    """Zero every coefficient with max(|k1|, |k2|) above the grid cutoff."""
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)
