"""Periodic grid calculus: Fourier and centered-difference derivatives,
sub-cell translation, trigonometric interpolation and dense
differentiation matrices.
"""

from functools import lru_cache

import numpy as np
from lsst.ts.nlkg.errors import ConfigError
from lsst.ts.nlkg.models.models import GridSpec
from scipy import fft, linalg

__all__ = [
    "STENCILS",
    "wavenumbers",
    "spectral_derivative",
    "fd_derivative",
    "derivative",
    "fourier_shift",
    "trig_interpolate",
    "differentiation_matrices",
    "quadrature",
]

STENCILS = ("spectral", "fd2")

# Points evaluated per block by trig_interpolate.
_INTERPOLATION_BLOCK = 256


@lru_cache(maxsize=32)
def _rwavenumbers(half_width: float, n: int) -> np.ndarray:
    h = 2.0 * half_width / n
    k = 2.0 * np.pi * fft.rfftfreq(n, d=h)
    k.setflags(write=False)
    return k


def wavenumbers(grid: GridSpec) -> np.ndarray:
    """Non-negative wavenumbers matching `scipy.fft.rfft` ordering."""
    return _rwavenumbers(grid.half_width, grid.n)


def spectral_derivative(u: np.ndarray, grid: GridSpec, order: int = 1) -> np.ndarray:
    """Fourier derivative along the last axis; the Nyquist mode is dropped
    for odd orders so that real data stay real.
    """
    k = wavenumbers(grid)
    multiplier = (1j * k) ** order
    if order % 2:
        multiplier = multiplier.copy()
        multiplier[-1] = 0.0
    return fft.irfft(fft.rfft(u, axis=-1) * multiplier, n=grid.n, axis=-1)


def fd_derivative(u: np.ndarray, grid: GridSpec, order: int = 1) -> np.ndarray:
    """Second-order centered differences on the periodic grid."""
    h = grid.h
    up = np.roll(u, -1, axis=-1)
    down = np.roll(u, 1, axis=-1)
    if order == 1:
        return (up - down) / (2.0 * h)
    if order == 2:
        return (up - 2.0 * u + down) / (h * h)
    raise ConfigError(f"fd2 derivatives of order {order} are not supported")


def derivative(
    u: np.ndarray, grid: GridSpec, order: int = 1, stencil: str = "spectral"
) -> np.ndarray:
    if stencil == "spectral":
        return spectral_derivative(u, grid, order)
    if stencil == "fd2":
        return fd_derivative(u, grid, order)
    raise ConfigError(f"Unknown stencil {stencil!r}, expected one of {STENCILS}")


def fourier_shift(u: np.ndarray, shift: float, grid: GridSpec) -> np.ndarray:
    """Return samples of x -> u(x - shift) for the periodic band-limited
    interpolant of ``u`` (last axis).
    """
    if shift == 0.0:
        return np.array(u, dtype=float, copy=True)
    k = wavenumbers(grid)
    return fft.irfft(
        fft.rfft(u, axis=-1) * np.exp(-1j * k * shift), n=grid.n, axis=-1
    )


def trig_interpolate(
    values: np.ndarray, grid: GridSpec, points: np.ndarray
) -> np.ndarray:
    """Evaluate the trigonometric interpolant of grid samples at arbitrary
    points (interpreted periodically).

    Parameters
    ----------
    values : `np.ndarray`
        Samples on ``grid``.
    grid : `GridSpec`
        The sampling grid.
    points : `np.ndarray`
        Evaluation abscissae.

    Returns
    -------
    interpolated : `np.ndarray`
        Interpolant values with the shape of ``points``.
    """
    n = grid.n
    coefficients = fft.rfft(values) / n
    weights = np.full(coefficients.shape, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    # the Nyquist term contributes its real part only
    coefficients[-1] = coefficients[-1].real
    coefficients = coefficients * weights
    k = wavenumbers(grid)
    flat = np.ravel(np.asarray(points, dtype=float)) + grid.half_width
    result = np.empty(flat.shape)
    for start in range(0, flat.size, _INTERPOLATION_BLOCK):
        block = flat[start : start + _INTERPOLATION_BLOCK]
        phases = np.exp(1j * np.outer(block, k))
        result[start : start + _INTERPOLATION_BLOCK] = (phases @ coefficients).real
    return result.reshape(np.shape(points))


@lru_cache(maxsize=8)
def _matrices(half_width: float, n: int, stencil: str) -> tuple[np.ndarray, np.ndarray]:
    if stencil == "spectral":
        # Trefethen's periodic differentiation matrices on [0, 2 pi),
        # rescaled to a box of length 2L.
        step = 2.0 * np.pi / n
        scale = np.pi / half_width
        index = np.arange(1, n)
        column1 = np.concatenate(
            ([0.0], 0.5 * (-1.0) ** index / np.tan(index * step / 2.0))
        )
        d1 = linalg.toeplitz(column1, -column1) * scale
        column2 = np.concatenate(
            (
                [-(np.pi**2) / (3.0 * step**2) - 1.0 / 6.0],
                -0.5 * (-1.0) ** index / np.sin(index * step / 2.0) ** 2,
            )
        )
        d2 = linalg.toeplitz(column2) * scale**2
    elif stencil == "fd2":
        h = 2.0 * half_width / n
        column1 = np.zeros(n)
        column1[1] = -1.0 / (2.0 * h)
        column1[-1] = 1.0 / (2.0 * h)
        d1 = linalg.circulant(column1)
        column2 = np.zeros(n)
        column2[0] = -2.0 / h**2
        column2[1] = 1.0 / h**2
        column2[-1] = 1.0 / h**2
        d2 = linalg.circulant(column2)
    else:
        raise ConfigError(f"Unknown stencil {stencil!r}, expected one of {STENCILS}")
    d1.setflags(write=False)
    d2.setflags(write=False)
    return d1, d2


def differentiation_matrices(
    grid: GridSpec, stencil: str = "spectral"
) -> tuple[np.ndarray, np.ndarray]:
    """Dense (D1, D2): D1 exactly antisymmetric and D2 exactly symmetric."""
    return _matrices(grid.half_width, grid.n, stencil)


def quadrature(values: np.ndarray, grid: GridSpec) -> float:
    """Trapezoidal rule on the periodic grid (all weights equal to h)."""
    return float(grid.h * np.sum(values))
