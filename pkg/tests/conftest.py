"""Test fixtures for nlkg tests."""

from __future__ import annotations

from typing import Any

import pytest
from lsst.ts.nlkg.models.models import (
    ExperimentConfig,
    GridSpec,
    NonlinearitySpec,
    SolitonSpec,
)
from lsst.ts.nlkg.profiles import GroundStateProfile
from lsst.ts.nlkg.spectral import EigenProfile, SpectralBundle, prepare_bundles

# Fine enough for the boosted eigen-residuals of every velocity used below.
GRID = GridSpec(half_width=32.0, n=512)
COARSE_GRID = GridSpec(half_width=32.0, n=256)

SINGLE_SPEC = SolitonSpec(beta=0.5)
PAIR_SPECS = [SolitonSpec(beta=0.8, x0=4.0), SolitonSpec(beta=0.4, x0=-12.0)]


def single_config(**construction: Any) -> ExperimentConfig:
    """Short single-soliton set-up on `GRID`."""
    section: dict[str, Any] = {
        "specs": [SINGLE_SPEC.model_dump()],
        "A": [1.0],
        "t0": 1.0,
        "schedule": [3.0, 4.0],
        "fit_margin": 0.5,
    }
    section.update(construction)
    return ExperimentConfig(
        name="test-single",
        grid=GRID,
        solver={"scheme": "yoshida4", "dt": 0.01},
        construction=section,
    )


def pair_config(**construction: Any) -> ExperimentConfig:
    """Two well separated solitons on `GRID`."""
    section: dict[str, Any] = {
        "specs": [spec.model_dump() for spec in PAIR_SPECS],
        "A": [1.0, -0.5],
        "t0": 1.0,
        "schedule": [4.0, 5.0],
        "fit_margin": 0.5,
    }
    section.update(construction)
    return ExperimentConfig(
        name="test-pair",
        grid=GRID,
        solver={"scheme": "yoshida4", "dt": 0.01},
        construction=section,
    )


@pytest.fixture(scope="session")
def nl() -> NonlinearitySpec:
    return NonlinearitySpec()


@pytest.fixture(scope="session")
def prepared_single(
    nl: NonlinearitySpec,
) -> tuple[GroundStateProfile, EigenProfile, list[SpectralBundle]]:
    return prepare_bundles(nl, GRID, [SINGLE_SPEC])


@pytest.fixture(scope="session")
def single_bundle(
    prepared_single: tuple[GroundStateProfile, EigenProfile, list[SpectralBundle]]
) -> SpectralBundle:
    return prepared_single[2][0]


@pytest.fixture(scope="session")
def profile(
    prepared_single: tuple[GroundStateProfile, EigenProfile, list[SpectralBundle]]
) -> GroundStateProfile:
    return prepared_single[0]


@pytest.fixture(scope="session")
def pair_bundles(nl: NonlinearitySpec) -> list[SpectralBundle]:
    _, _, bundles = prepare_bundles(nl, GRID, PAIR_SPECS)
    return bundles
