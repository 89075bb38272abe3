import numpy as np
import pytest

from felab.spectral import Grid2D, SpectralField, to_spectral


@pytest.fixture(scope="session")
def grid32() -> Grid2D:
    return Grid2D.create(32)


@pytest.fixture(scope="session")
def grid64() -> Grid2D:
    return Grid2D.create(64)


def random_field(grid: Grid2D, seed: int, band: int | None = None,
                 decay: float = 1.0, amplitude: float = 1.0) -> SpectralField:
    """Random mean-zero real field, optionally band-limited to |k|_inf <= band."""
    rng = np.random.default_rng(seed)
    f = to_spectral(grid, rng.standard_normal((grid.n, grid.n)))
    c = f.coeffs.copy()
    k = np.where(grid.k_sq > 0, grid.k_abs, 1.0)
    c *= k ** (-decay)
    if band is not None:
        c *= (np.maximum(np.abs(grid.kk1), grid.kk2) <= band)
    c[0, 0] = 0.0
    field = SpectralField(grid, c)
    scale = np.abs(c).max()
    return SpectralField(grid, c * (amplitude / scale)) if scale > 0 else field
