import numpy as np
import pytest
from lsst.ts.nlkg.discretization import (
    derivative,
    differentiation_matrices,
    fd_derivative,
    fourier_shift,
    quadrature,
    spectral_derivative,
    trig_interpolate,
)
from lsst.ts.nlkg.errors import ConfigError
from lsst.ts.nlkg.models.models import GridSpec

grid = GridSpec(half_width=np.pi, n=64)


def test_spectral_derivative_of_trig_polynomial() -> None:
    x = grid.x
    u = np.sin(3 * x) + 0.5 * np.cos(5 * x)
    first = spectral_derivative(u, grid, 1)
    second = spectral_derivative(u, grid, 2)
    assert np.allclose(first, 3 * np.cos(3 * x) - 2.5 * np.sin(5 * x), atol=1e-11)
    assert np.allclose(second, -9 * np.sin(3 * x) - 12.5 * np.cos(5 * x), atol=1e-10)


def test_fd_derivative_is_second_order() -> None:
    errors = []
    for n in (64, 128):
        fine = GridSpec(half_width=np.pi, n=n)
        u = np.sin(fine.x)
        errors.append(np.max(np.abs(fd_derivative(u, fine, 2) + u)))
    assert 3.8 < errors[0] / errors[1] < 4.2


def test_unsupported_derivatives_raise() -> None:
    u = np.zeros(grid.n)
    with pytest.raises(ConfigError):
        fd_derivative(u, grid, 3)
    with pytest.raises(ConfigError):
        derivative(u, grid, 1, "fd4")


def test_fourier_shift_translates_band_limited_data() -> None:
    x = grid.x
    shifted = fourier_shift(np.cos(2 * x), 0.3, grid)
    assert np.allclose(shifted, np.cos(2 * (x - 0.3)), atol=1e-12)
    assert np.array_equal(fourier_shift(np.cos(x), 0.0, grid), np.cos(x))


def test_trig_interpolate_off_grid() -> None:
    points = np.linspace(-3.0, 3.0, 301)
    values = trig_interpolate(np.sin(4 * grid.x), grid, points)
    assert values.shape == points.shape
    assert np.allclose(values, np.sin(4 * points), atol=1e-12)


@pytest.mark.parametrize("stencil", ["spectral", "fd2"])
def test_differentiation_matrices_symmetry(stencil: str) -> None:
    d1, d2 = differentiation_matrices(grid, stencil)
    assert np.array_equal(d1, -d1.T)
    assert np.array_equal(d2, d2.T)
    u = np.sin(3 * grid.x)
    assert np.allclose(d1 @ u, derivative(u, grid, 1, stencil), atol=1e-10)
    assert np.allclose(d2 @ u, derivative(u, grid, 2, stencil), atol=1e-9)


def test_quadrature_is_periodic_trapezoid() -> None:
    assert quadrature(np.cos(grid.x) ** 2, grid) == pytest.approx(np.pi)
    assert quadrature(np.ones(grid.n), grid) == pytest.approx(grid.length)
