import json
from pathlib import Path

import pytest
from lsst.ts.nlkg.errors import AcceptanceFailure
from lsst.ts.nlkg.harness.acceptance import CRITERIA, AcceptanceSuite, run_acceptance
from lsst.ts.nlkg.harness.commands import cmd_verify
from lsst.ts.nlkg.models.models import AcceptanceConfig, ExperimentConfig
from pydantic import ValidationError

COARSE_BOOSTED_GRID = {"half_width": 32.0, "n": 64}


def small_config(**acceptance: object) -> ExperimentConfig:
    section = {"betas": [0.0, 0.5], "synthetic_series": 4}
    section.update(acceptance)
    return ExperimentConfig.model_validate(
        {"name": "acceptance-test", "acceptance": section}
    )


def test_every_criterion_has_a_check() -> None:
    suite = AcceptanceSuite(small_config())
    assert sorted(suite.checks()) == sorted(CRITERIA) == list(range(1, 11))


def test_pairings_and_decay_verifier() -> None:
    results = run_acceptance(small_config(), [10, 3])
    assert [result.number for result in results] == [10, 3]
    assert all(result.passed for result in results), [r.detail for r in results]
    assert len(results[0].values["results"]) == 4
    assert results[1].values["max_defect"] < 1e-9


def test_boosted_law() -> None:
    result = AcceptanceSuite(small_config()).boosted_law()
    assert result.passed
    assert result.values["e_beta"]["0.5"] == pytest.approx(1.5, abs=1e-6)


def test_decay_verifier_failure_is_reported() -> None:
    suite = AcceptanceSuite(small_config(rate_tolerance=-1.0, criteria=[10]))
    (result,) = suite.run()
    assert not result.passed
    assert result.detail == "0/4 series verified"


def test_runtime_caps() -> None:
    defaults = AcceptanceConfig()
    assert defaults.spectral_max_runtime_s == 10.0
    assert defaults.single_max_runtime_s == 300.0
    assert defaults.multi_max_runtime_s == 1800.0
    with pytest.raises(ValidationError):
        AcceptanceConfig(multi_max_runtime_s=0.0)


def test_spectral_ground_truth_over_runtime_cap_fails() -> None:
    grid = {"half_width": 32.0, "n": 512}
    within = AcceptanceSuite(small_config(spectral_grid=grid))
    result = within.spectral_ground_truth()
    assert result.passed, result.detail
    assert result.values["max_runtime_s"] == 10.0
    over = AcceptanceSuite(
        small_config(spectral_grid=grid, spectral_max_runtime_s=1e-9)
    )
    result = over.spectral_ground_truth()
    assert not result.passed
    assert result.values["error"] <= 1e-4
    assert "over" in result.detail


def test_residual_exponent_reports_horizons_and_runtime_cap() -> None:
    suite = AcceptanceSuite(small_config(single_max_runtime_s=1e-9))
    result = suite.residual_exponent()
    assert not result.passed
    assert result.values["runtime_s"] > result.values["max_runtime_s"]
    assert result.values["t0"] == 1.0
    assert result.values["S"] == pytest.approx([5.0, 6.0, 7.0])
    assert "t0=1.0" in result.detail


def test_coarse_grid_fails_eigen_residual_criteria() -> None:
    cfg = small_config(boosted_grid=COARSE_BOOSTED_GRID)
    results = run_acceptance(cfg, [2, 3])
    assert [result.passed for result in results] == [False, False]
    for result in results:
        assert "eigen-residual" in result.detail
        assert "refine the grid" in result.detail


def test_verify_writes_summary_for_coarse_grid(tmp_path: Path) -> None:
    cfg = small_config(criteria=[2, 3], boosted_grid=COARSE_BOOSTED_GRID)
    with pytest.raises(AcceptanceFailure) as excinfo:
        cmd_verify(cfg, tmp_path)
    assert len(excinfo.value.failures) == 2
    assert "eigen-residual" in str(excinfo.value)
    summary = json.loads((tmp_path / "acceptance.json").read_text())
    assert summary["passed"] is False
    assert [c["passed"] for c in summary["criteria"]] == [False, False]
