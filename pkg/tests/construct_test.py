import math

import numpy as np
import pytest
from lsst.ts.nlkg.construct import (
    ExactSumFlow,
    SampledFlow,
    ShootingContext,
    boundary_identity,
    build_base,
    construct_multi,
    construct_single,
    exit_time_map,
    final_data_single,
    find_a,
    resolve_sigma,
    solve_modulation_b,
    special_solution_relation,
    sphere_points,
)
from lsst.ts.nlkg.errors import ConfigError
from lsst.ts.nlkg.evolve import KleinGordonIntegrator, TrajectoryRecord
from lsst.ts.nlkg.models.models import SolitonSpec, SolverConfig
from lsst.ts.nlkg.models.models_helpers import separation_sigma
from lsst.ts.nlkg.spectral import SpectralBundle, energy_norm, inner_product

from .conftest import GRID, PAIR_SPECS, SINGLE_SPEC, pair_config, single_config


def single_context(
    bundle: SpectralBundle, S: float = 5.0, t0: float = 1.0
) -> ShootingContext:
    cfg = single_config()
    integrator = KleinGordonIntegrator(
        cfg.nonlinearity, GRID, cfg.solver.model_copy(update={"snapshot_stride": 1})
    )
    return ShootingContext(
        stage=None,
        S=S,
        t0=t0,
        rho=1.5,
        sigma=0.1,
        amplitude=0.0,
        directions=[0],
        bundles=[bundle],
        reference=ExactSumFlow([bundle]),
        integrator=integrator,
        cfg=cfg.construction,
    )


def test_final_data_single(single_bundle: SpectralBundle) -> None:
    S = 4.0
    soliton = single_bundle.soliton_at(S)
    assert np.array_equal(
        final_data_single(SINGLE_SPEC, 0.0, S, single_bundle).pair, soliton.pair
    )
    data = final_data_single(SINGLE_SPEC, 2.0, S, single_bundle)
    assert data.t == S
    projection = inner_product(
        data.pair - soliton.pair, single_bundle.profiles_at(S).zminus, GRID
    )
    assert projection == pytest.approx(2.0 * math.exp(-single_bundle.e_beta * S))
    with pytest.raises(ConfigError):
        final_data_single(SolitonSpec(beta=0.1), 1.0, S, single_bundle)


def test_zero_amplitude_member_is_the_soliton(single_bundle: SpectralBundle) -> None:
    member = construct_single(SINGLE_SPEC, 0.0, single_config(), single_bundle)
    report = member.report
    assert report.max_residual == 0.0
    assert report.fitted_rate is None
    assert report.final_times == [3.0, 4.0]
    assert len(member.states) == 2
    assert member.state.t == pytest.approx(1.0)
    exact = single_bundle.soliton_at(1.0).pair
    assert energy_norm(member.state.pair - exact, GRID) < 1e-5


def test_unit_amplitude_member(single_bundle: SpectralBundle) -> None:
    member = construct_single(SINGLE_SPEC, 1.0, single_config(), single_bundle)
    record = member.records[-1]
    assert record.times[0] == 4.0
    rescaled = math.exp(single_bundle.e_beta * 4.0) * record.values("alpha_minus")
    assert rescaled[0] == pytest.approx(1.0, rel=1e-6)
    assert record.values("r")[0] < 1e-12
    report = member.report
    assert report.A == 1.0
    assert report.e_beta == pytest.approx(1.5, abs=1e-7)
    assert len(report.stabilization) == 1
    assert report.max_residual > 0.0


def test_special_solution_relation_for_zero_amplitude(
    single_bundle: SpectralBundle,
) -> None:
    relation = special_solution_relation(
        SINGLE_SPEC, 0.0, single_config(), single_bundle
    )
    assert relation.t_shift == 0.0
    assert relation.discrepancy < 1e-5 * relation.reference_norm


def test_modulation_matrix_of_separated_solitons(
    pair_bundles: list[SpectralBundle],
) -> None:
    target = np.array([1e-3, -2e-3])
    b, psi = solve_modulation_b(target, 6.0, pair_bundles, [0, 1])
    assert np.allclose(psi, np.eye(2), atol=1e-4)
    assert np.allclose(psi @ b, target)
    b_one, psi_one = solve_modulation_b(target[1:], 6.0, pair_bundles, [1])
    assert psi_one.shape == (1, 1)
    assert b_one[0] == pytest.approx(target[1], rel=1e-4)
    empty, _ = solve_modulation_b(np.zeros(0), 6.0, pair_bundles, [])
    assert empty.size == 0
    with pytest.raises(ConfigError):
        solve_modulation_b(target, 6.0, pair_bundles, [1])


def test_boundary_coefficients_exit_at_once(single_bundle: SpectralBundle) -> None:
    context = single_context(single_bundle)
    samples = boundary_identity(context, count=4)
    assert len(samples) == 4
    for sample in samples:
        assert sample.a_norm == pytest.approx(context.radius)
        assert sample.exit_time == context.S
        assert sample.steps_before_S == 0.0
        assert sample.mapping_error < 1e-6


def test_exit_map_of_the_bare_soliton_lands(single_bundle: SpectralBundle) -> None:
    context = single_context(single_bundle)
    outcome = exit_time_map(np.zeros(1), context)
    assert outcome.converged
    assert outcome.exit_reason == "landed"
    assert outcome.exit_time == pytest.approx(context.t0)
    assert outcome.b_bound_ok
    search = find_a(context)
    assert search.converged
    assert search.iterations == 1
    assert np.array_equal(search.a_star, np.zeros(1))


def test_sampled_flow(single_bundle: SpectralBundle) -> None:
    integrator = KleinGordonIntegrator(
        single_config().nonlinearity,
        GRID,
        SolverConfig(scheme="yoshida4", dt=0.01, snapshot_stride=10),
    )
    _, record = integrator.evolve_to(single_bundle.soliton_at(2.0), 1.0)
    flow = SampledFlow(record, integrator)
    assert flow.span == (1.0, 2.0)
    assert np.array_equal(flow(1.5), flow.snapshots[5].pair)
    off_sample = flow.state(1.512)
    assert off_sample.t == pytest.approx(1.512)
    exact = single_bundle.soliton_at(1.512).pair
    assert np.max(np.abs(off_sample.pair - exact)) < 1e-6
    with pytest.raises(ConfigError):
        flow(3.0)
    with pytest.raises(ConfigError):
        SampledFlow(TrajectoryRecord(), integrator)


def test_bare_sum_base(pair_bundles: list[SpectralBundle]) -> None:
    cfg = pair_config()
    flow, report = build_base(cfg, pair_bundles, sigma=0.1)
    assert report is None
    assert flow.span == (1.0, 5.0)
    exact = ExactSumFlow(pair_bundles)
    assert np.array_equal(flow(5.0), exact(5.0))
    assert np.max(np.abs(flow(1.0) - exact(1.0))) < 1e-4


def test_multi_soliton_with_zero_amplitudes_reproduces_the_base(
    pair_bundles: list[SpectralBundle],
) -> None:
    member = construct_multi(pair_config(A=[0.0, 0.0]), pair_bundles)
    report = member.report
    assert report.base == "bare-sum"
    assert len(report.stages) == 2
    for stage in report.stages:
        assert stage.j == 1
        assert stage.converged
        assert stage.a == [0.0]
    assert np.max(member.remainder) == 0.0
    assert len(member.states) == 2
    assert not report.sigma_override
    assert report.sigma == report.sigma_formula


def test_multi_soliton_with_one_amplitude(
    pair_bundles: list[SpectralBundle],
) -> None:
    member = construct_multi(pair_config(A=[0.0, 1.0]), pair_bundles)
    report = member.report
    assert report.amplitudes == [0.0, 1.0]
    assert [stage.j for stage in report.stages] == [1, 2, 1, 2]
    assert all(stage.converged for stage in report.stages)
    assert report.required_rate < 0.0
    assert member.remainder.shape == member.remainder_times.shape
    with pytest.raises(ConfigError):
        construct_multi(pair_config(), pair_bundles[:1])


def test_sphere_points() -> None:
    line = sphere_points(1, 4, 0.5)
    assert [float(p[0]) for p in line] == [0.5, -0.5, 0.5, -0.5]
    points = sphere_points(3, 6, 2.0, seed=3)
    assert len(points) == 6
    assert np.allclose([np.linalg.norm(p) for p in points], 2.0)


def test_resolve_sigma(pair_bundles: list[SpectralBundle]) -> None:
    lambda0 = pair_bundles[0].lambda0
    formula = separation_sigma(PAIR_SPECS, lambda0)
    default = pair_config().construction
    assert resolve_sigma(default, lambda0) == (formula, formula)
    matching = pair_config(sigma=formula).construction
    assert resolve_sigma(matching, lambda0) == (formula, formula)
    override = pair_config(sigma=0.5 * formula).construction
    assert resolve_sigma(override, lambda0) == (0.5 * formula, formula)
