import numpy as np
import pytest
from lsst.ts.nlkg.errors import ConfigError, ConvergenceError, DomainTooSmallError
from lsst.ts.nlkg.models.models import (
    CustomNonlinearity,
    GridSpec,
    NonlinearitySpec,
    SolitonSpec,
    Tolerances,
    register_nonlinearity,
)
from lsst.ts.nlkg.profiles import (
    GroundStateProfile,
    boost,
    boost_derivative,
    ground_state,
    multi_profile,
    tail_rates,
    translation_quotient,
)

from .conftest import GRID
from .oracles import power_ground_state, shoot_profile


def test_cubic_ground_state_is_sech(profile: GroundStateProfile) -> None:
    s = np.linspace(-10.0, 10.0, 201)
    assert profile.peak == pytest.approx(np.sqrt(2.0))
    assert np.allclose(profile(s), np.sqrt(2.0) / np.cosh(s), rtol=1e-12)


def test_quintic_ground_state() -> None:
    nl = NonlinearitySpec(p=5.0)
    profile = ground_state(nl, GRID)
    assert profile.peak == pytest.approx(3.0**0.25)
    s = np.linspace(-6.0, 6.0, 121)
    assert np.allclose(profile(s), power_ground_state(nl, s), atol=1e-10)
    near = s[np.abs(s) <= 4.0]
    assert np.allclose(profile(near), shoot_profile(nl, profile.peak, near), atol=1e-7)


def test_derivatives_match_the_profile_equation(profile: GroundStateProfile) -> None:
    s = np.linspace(-6.0, 6.0, 121)
    step = 1e-5
    numeric = (profile(s + step) - profile(s - step)) / (2 * step)
    assert np.allclose(profile.derivative(s, 1), numeric, atol=1e-8)
    q = profile(s)
    assert np.allclose(profile.derivative(s, 2), q - q**3)
    with pytest.raises(ConfigError):
        profile.derivative(s, 4)


def test_small_domain_is_rejected() -> None:
    with pytest.raises(DomainTooSmallError):
        ground_state(NonlinearitySpec(), GridSpec(half_width=10.0, n=256))


def test_residual_bound_is_enforced() -> None:
    with pytest.raises(ConvergenceError):
        ground_state(NonlinearitySpec(), GRID, Tolerances(residual_factor=1e-9))


def test_boost_moves_and_contracts(profile: GroundStateProfile) -> None:
    spec = SolitonSpec(beta=0.6, x0=-2.0)
    state = boost(profile, spec, 5.0, GRID)
    x = GRID.x
    y = spec.gamma * (x - 1.0)
    assert state.t == 5.0
    assert np.allclose(state.u1, profile(y), atol=1e-14)
    assert np.allclose(
        state.u2, -spec.beta * spec.gamma * profile.derivative(y, 1), atol=1e-14
    )
    dxr = boost_derivative(profile, spec, 5.0, GRID, 1)
    assert dxr.shape == (2, GRID.n)
    assert np.allclose(dxr[0], spec.gamma * profile.derivative(y, 1), atol=1e-14)
    with pytest.raises(ConfigError):
        boost_derivative(profile, spec, 5.0, GRID, 3)


def test_multi_profile_sums_and_rejects_equal_velocities(
    profile: GroundStateProfile,
) -> None:
    specs = [SolitonSpec(beta=0.5, x0=8.0), SolitonSpec(beta=-0.5, x0=-8.0)]
    total = multi_profile(specs, profile, 0.0, GRID)
    single = [boost(profile, spec, 0.0, GRID) for spec in specs]
    assert np.allclose(total.u1, single[0].u1 + single[1].u1)
    assert np.allclose(total.u2, single[0].u2 + single[1].u2)
    with pytest.raises(ConfigError):
        multi_profile([specs[0], SolitonSpec(beta=0.5)], profile, 0.0, GRID)


def test_tail_rates(profile: GroundStateProfile) -> None:
    rates = tail_rates(profile)
    assert len(rates) == 4
    assert all(abs(rate + 1.0) < 1e-2 for rate in rates)


def test_translation_quotient_tends_to_derivative_norm(
    profile: GroundStateProfile,
) -> None:
    x = GRID.x
    limit = GRID.h * np.sum(
        profile.derivative(x, 1) ** 2 + profile.derivative(x, 2) ** 2
    )
    quotients = translation_quotient(profile, GRID, np.array([0.4, 0.1, 0.01]))
    errors = np.abs(quotients - limit)
    assert errors[-1] < 1e-3 * limit
    assert errors[0] > errors[1] > errors[2]


def test_custom_nonlinearity_by_shooting() -> None:
    register_nonlinearity(
        CustomNonlinearity(
            name="test-cubic",
            f=lambda u: u**3,
            df=lambda u: 3 * u**2,
            d2f=lambda u: 6 * u,
            F=lambda u: u**4 / 4,
        )
    )
    profile = ground_state(NonlinearitySpec(hook="test-cubic"), GRID)
    s = np.linspace(-8.0, 8.0, 81)
    assert profile.peak == pytest.approx(np.sqrt(2.0), abs=1e-6)
    assert np.allclose(profile(s), np.sqrt(2.0) / np.cosh(s), atol=1e-6)


def test_custom_nonlinearity_must_be_odd() -> None:
    with pytest.raises(ValueError):
        CustomNonlinearity(
            name="even",
            f=lambda u: u**2,
            df=lambda u: 2 * u,
            d2f=lambda u: 2 + 0 * u,
            F=lambda u: u**3 / 3,
        )
