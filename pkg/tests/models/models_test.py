import math

import numpy as np
import pytest
from lsst.ts.nlkg.errors import ConfigError
from lsst.ts.nlkg.models.models import (
    AcceptanceConfig,
    AnalysisConfig,
    ConstructionConfig,
    ExperimentConfig,
    FieldState,
    GridSpec,
    NonlinearitySpec,
    RunManifest,
    SolitonSpec,
    SolverConfig,
)
from pydantic import ValidationError


def test_nonlinearity_validation() -> None:
    nl = NonlinearitySpec(p=3.0, coeff=2.0)
    u = np.array([-1.5, 0.0, 2.0])
    assert np.allclose(nl.f(u), 2.0 * u**3)
    assert np.allclose(nl.df(u), 6.0 * u**2)
    assert np.allclose(nl.F(u), 0.5 * u**4)
    assert nl.is_pure_power
    with pytest.raises(ConfigError):
        nl.custom
    for bad in ({"p": 2.0}, {"coeff": 0.0}, {"hook": "no-such-hook"}):
        with pytest.raises(ValidationError):
            NonlinearitySpec(**bad)


def test_grid() -> None:
    grid = GridSpec(half_width=10.0, n=40)
    assert grid.h == pytest.approx(0.5)
    assert grid.x[0] == -10.0
    assert grid.x[-1] == pytest.approx(9.5)
    assert grid.refined(2.0).n == 80
    for n in (8, 17):
        with pytest.raises(ValidationError):
            GridSpec(n=n)
    with pytest.raises(ValidationError):
        GridSpec(half_width=0.0)


def test_soliton_spec() -> None:
    spec = SolitonSpec(beta=0.6, x0=-2.0)
    assert spec.gamma == pytest.approx(1.25)
    assert spec.center(5.0) == pytest.approx(1.0)
    for beta in (1.0, -1.2):
        with pytest.raises(ValidationError):
            SolitonSpec(beta=beta)
    with pytest.raises(ValidationError):
        SolitonSpec(beta=0.1, speed=2.0)


def test_field_state() -> None:
    state = FieldState.zeros(8, t=1.5)
    assert state.pair.shape == (2, 8)
    copied = state.copy()
    copied.u1[0] = 1.0
    assert state.u1[0] == 0.0
    with pytest.raises(ValueError):
        FieldState(u1=np.zeros(4), u2=np.zeros(5))
    with pytest.raises(ValueError):
        FieldState(u1=np.array([0.0, np.nan]), u2=np.zeros(2))


def test_solver_time_step() -> None:
    grid = GridSpec(half_width=32.0, n=512)
    assert SolverConfig(scheme="leapfrog").resolved_dt(grid) == pytest.approx(
        0.25 * grid.h
    )
    assert SolverConfig().resolved_dt(grid) == pytest.approx(0.5 * grid.h)
    with pytest.raises(ConfigError):
        SolverConfig(scheme="leapfrog", dt=grid.h).resolved_dt(grid)
    for bad in ({"dt": 0.0}, {"cfl_safety": 1.0}, {"snapshot_stride": -1}):
        with pytest.raises(ValidationError):
            SolverConfig(**bad)


def test_construction_defaults() -> None:
    construction = ConstructionConfig()
    assert construction.N == 1
    assert construction.final_times == [6.0, 10.0, 14.0, 18.0, 22.0]


@pytest.mark.parametrize(
    "section",
    [
        {"A": [1.0, 2.0]},
        {"A": [math.inf]},
        {"specs": [{"beta": 0.4}, {"beta": 0.8}], "A": [1.0, 1.0]},
        {"specs": [{"beta": 0.4}, {"beta": 0.4}], "A": [1.0, 1.0]},
        {"specs": [{"beta": 0.4}, {"beta": 0.0}], "A": [1.0, 1.0]},
        {"schedule": [4.0, 3.0]},
        {"t0": 5.0, "schedule": [5.0, 6.0]},
        {"sigma": 0.0},
        {"reference": "analytic"},
        {"fixed_point_damping": 0.0},
    ],
)
def test_construction_rejects(section: dict) -> None:
    with pytest.raises(ValidationError):
        ConstructionConfig(**section)


def test_analysis_lambda() -> None:
    assert AnalysisConfig().resolved_lambda() == 2.0
    assert AnalysisConfig(alpha_fit=5.0).resolved_lambda() == 2.5
    assert AnalysisConfig(alpha_fit=5.0, lambda_exp=1.5).resolved_lambda() == 1.5
    with pytest.raises(ConfigError):
        AnalysisConfig(alpha_fit=3.0).resolved_lambda()
    for bad in ({"delta": 0.25}, {"lambda_exp": 1.0}, {"newton_cap": 0}):
        with pytest.raises(ValidationError):
            AnalysisConfig(**bad)


def test_acceptance_criteria_range() -> None:
    assert AcceptanceConfig().criteria == list(range(1, 11))
    with pytest.raises(ValidationError):
        AcceptanceConfig(criteria=[0, 3])


def test_experiment_cross_checks() -> None:
    ExperimentConfig()
    with pytest.raises(ValidationError, match="horizon"):
        ExperimentConfig(solver={"dt": 0.01, "max_steps": 10})
    with pytest.raises(ValidationError, match="seam"):
        ExperimentConfig(grid={"half_width": 10.0, "n": 64})
    with pytest.raises(ValidationError, match="sweep"):
        ExperimentConfig(sweep=[[1.0, 2.0]])
    with pytest.raises(ValidationError):
        ExperimentConfig(unknown=1)


def test_with_resolution() -> None:
    cfg = ExperimentConfig(solver={"dt": 0.01})
    assert cfg.with_resolution(1.0) is cfg
    finer = cfg.with_resolution(2.0)
    assert finer.grid.n == 2 * cfg.grid.n
    assert finer.solver.dt == pytest.approx(0.005)
    assert ExperimentConfig().with_resolution(0.5).solver.dt is None
    with pytest.raises(ConfigError):
        cfg.with_resolution(-1.0)


def test_manifest_record_replaces_and_sorts() -> None:
    manifest = RunManifest(command="spectrum", config_hash="0")
    manifest.record("b.json", "1")
    manifest.record("a.bin", "2", "snapshot")
    manifest.record("b.json", "3")
    assert [(a.path, a.sha256) for a in manifest.artifacts] == [
        ("a.bin", "2"),
        ("b.json", "3"),
    ]
