import numpy as np
import pytest
from lsst.ts.nlkg.analysis.projections import (
    modulate_center,
    modulate_full,
    project_alphas,
    projection_dynamics,
    track_modulation,
)
from lsst.ts.nlkg.discretization import fourier_shift
from lsst.ts.nlkg.errors import ConfigError, ConvergenceError, GridMismatchError
from lsst.ts.nlkg.models.models import FieldState
from lsst.ts.nlkg.spectral import SpectralBundle

from ..conftest import COARSE_GRID, GRID


def test_project_alphas(single_bundle: SpectralBundle) -> None:
    t = 2.0
    profiles = single_bundle.profiles_at(t)
    soliton = single_bundle.soliton_at(t).pair
    state = soliton + 0.3 * profiles.yplus + 0.2 * profiles.yminus
    alpha_plus, alpha_minus = project_alphas(state, soliton, [single_bundle], t)
    assert alpha_minus[0] == pytest.approx(0.3, abs=1e-8)
    assert alpha_plus[0] == pytest.approx(0.2, abs=1e-8)
    with pytest.raises(GridMismatchError):
        project_alphas(
            np.zeros((2, COARSE_GRID.n)),
            np.zeros((2, COARSE_GRID.n)),
            [single_bundle],
            t,
        )


def test_modulate_full_single(single_bundle: SpectralBundle) -> None:
    t = 1.0
    profiles = single_bundle.profiles_at(t)
    z = 0.02 * profiles.dxr + 0.01 * profiles.yplus
    sample = modulate_full(z, [single_bundle], t)
    assert sample.a[0] == pytest.approx(0.02, abs=1e-10)
    assert sample.b[0] == pytest.approx(0.01, abs=1e-10)
    assert np.max(np.abs(sample.remainder)) < 1e-10
    assert sample.orthogonality < 1e-10
    assert sample.leading_a[0] == pytest.approx(0.02, abs=1e-8)
    assert sample.leading_b[0] == pytest.approx(0.01, abs=1e-8)


def test_modulate_full_pair(pair_bundles: list[SpectralBundle]) -> None:
    t = 3.0
    first, second = (bundle.profiles_at(t) for bundle in pair_bundles)
    z = 0.01 * first.dxr + 0.03 * first.yplus - 0.02 * second.yplus
    sample = modulate_full(z, pair_bundles, t)
    assert np.allclose(sample.a, [0.01, 0.0], atol=1e-9)
    assert np.allclose(sample.b, [0.03, -0.02], atol=1e-9)
    assert np.isfinite(sample.condition)


def test_modulate_center_recovers_a_shift(single_bundle: SpectralBundle) -> None:
    t = 2.0
    shifted = fourier_shift(single_bundle.soliton_at(t).pair, 0.3, GRID)
    assert modulate_center(shifted, single_bundle, t) == pytest.approx(0.3, abs=1e-8)


def test_modulate_center_outside_orbital_radius(
    single_bundle: SpectralBundle,
) -> None:
    t = 0.0
    state = single_bundle.soliton_at(t).pair.copy()
    state[0] += 2.0 * np.exp(-((GRID.x + 20.0) ** 2))
    with pytest.raises(ConvergenceError):
        modulate_center(state, single_bundle, t)


def test_track_modulation(single_bundle: SpectralBundle) -> None:
    states = [single_bundle.soliton_at(t) for t in (1.0, 2.0, 3.0)]
    track = track_modulation(states, [single_bundle], modulate_centers=True)
    assert track.times == [1.0, 2.0, 3.0]
    assert track.max_shift_jump() < 1e-8
    columns = track.series()
    assert list(columns) == [
        "t",
        "a_1",
        "b_1",
        "alpha_plus_1",
        "alpha_minus_1",
        "shift_1",
        "orthogonality",
        "deviation_norm",
    ]
    assert np.allclose(columns["deviation_norm"], 0.0)
    with pytest.raises(GridMismatchError):
        track_modulation([FieldState.zeros(COARSE_GRID.n)], [single_bundle])


def test_projection_dynamics() -> None:
    times = np.linspace(0.0, 3.0, 601)
    alpha = np.exp(-4.0 * times)
    constant = projection_dynamics(
        times, alpha, 2.0, np.zeros_like(times), np.exp(-4.0 * times)
    )
    assert constant == pytest.approx(2.0, rel=1e-3)
    with pytest.raises(ConfigError):
        projection_dynamics(times[:2], alpha[:2], 2.0, alpha[:2], alpha[:2])
