import json
from pathlib import Path
from typing import Any
from unittest.mock import patch

import pytest
from lsst.ts.nlkg.errors import AcceptanceFailure, ConfigError, ConvergenceError
from lsst.ts.nlkg.harness.commands import (
    cmd_construct,
    cmd_sweep,
    cmd_verify,
    load_trajectory,
)
from lsst.ts.nlkg.harness.persistence import RunWriter, read_csv, verify_manifest
from lsst.ts.nlkg.models.models import ExperimentConfig
from lsst.ts.nlkg.spectral import SpectralBundle

from ..conftest import pair_config, single_config


def test_construct_single_run(tmp_path: Path, single_bundle: SpectralBundle) -> None:
    out = tmp_path / "construct"
    summary = cmd_construct(single_config(A=[0.0]), out, [single_bundle])
    assert summary["A"] == 0.0
    assert summary["fitted_rate"] is None
    assert summary["required_rate"] == pytest.approx(-1.9 * single_bundle.e_beta)

    manifest = verify_manifest(out)
    assert manifest.stages == {"single": "done"}
    paths = {artifact.path for artifact in manifest.artifacts}
    assert {"landing/S_3.bin", "landing/S_4.bin", "single_report.json"} <= paths
    residuals = read_csv(out / "residual.csv")
    assert residuals["t"][0] == 4.0
    report = json.loads((out / "single_report.json").read_text())
    assert report["A"] == 0.0

    states = load_trajectory(out)
    assert states[0].t == pytest.approx(1.0)
    assert states[-1].t == pytest.approx(4.0)
    assert all(a.t < b.t for a, b in zip(states, states[1:]))


def test_construct_multi_records_a_sigma_override(
    tmp_path: Path, pair_bundles: list[SpectralBundle]
) -> None:
    out = tmp_path / "construct"
    summary = cmd_construct(pair_config(A=[0.0, 0.0], sigma=0.01), out, pair_bundles)
    assert summary["sigma"] == 0.01
    manifest = verify_manifest(out)
    (warning,) = manifest.warnings
    assert warning.startswith("sigma=0.01 overrides the separation formula")
    report = json.loads((out / "multi_report.json").read_text())
    assert report["sigma_override"] is True
    assert report["sigma_formula"] != 0.01


def test_load_trajectory_needs_snapshots(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        load_trajectory(tmp_path)
    writer = RunWriter(tmp_path, "construct", single_config())
    writer.finish()
    with pytest.raises(ConfigError):
        load_trajectory(tmp_path)


def test_failed_verification_still_writes_its_summary(tmp_path: Path) -> None:
    cfg = ExperimentConfig.model_validate(
        {
            "name": "failing",
            "acceptance": {
                "criteria": [10],
                "synthetic_series": 2,
                "rate_tolerance": -1.0,
            },
        }
    )
    with pytest.raises(AcceptanceFailure) as excinfo:
        cmd_verify(cfg, tmp_path)
    assert len(excinfo.value.failures) == 1
    summary = json.loads((tmp_path / "acceptance.json").read_text())
    assert summary["passed"] is False
    assert verify_manifest(tmp_path).stages == {"criterion_10": "failed"}


def test_sweep_writes_one_run_per_member(tmp_path: Path) -> None:
    data = single_config().model_dump(mode="json")
    data["sweep"] = [[0.0], [1.0]]
    summary = cmd_sweep(ExperimentConfig.model_validate(data), tmp_path)
    assert summary == {"members": 2, "failed": 0}
    manifest = verify_manifest(tmp_path)
    assert manifest.stages == {"member_000": "done", "member_001": "done"}
    for name in ("member_000", "member_001"):
        assert verify_manifest(tmp_path / name).command == "construct"
    entries = json.loads((tmp_path / "sweep.json").read_text())
    assert [entry["A"] for entry in entries] == [[0.0], [1.0]]


def test_sweep_records_failed_members(tmp_path: Path) -> None:
    def fake_construct(
        cfg: ExperimentConfig, out: Path, bundles: Any = None
    ) -> dict[str, Any]:
        if cfg.construction.A == [2.0]:
            raise ConvergenceError("fixed point cap reached")
        RunWriter(out, "construct", cfg).finish()
        return {"A": cfg.construction.A[0]}

    data = single_config().model_dump(mode="json")
    data["sweep"] = [[1.0], [2.0], [3.0]]
    with patch(
        "lsst.ts.nlkg.harness.commands.construction_bundles", return_value=[]
    ), patch(
        "lsst.ts.nlkg.harness.commands.cmd_construct", side_effect=fake_construct
    ):
        summary = cmd_sweep(ExperimentConfig.model_validate(data), tmp_path)
    assert summary == {"members": 3, "failed": 1}
    assert verify_manifest(tmp_path).stages == {
        "member_000": "done",
        "member_001": "failed",
        "member_002": "done",
    }
    entries = json.loads((tmp_path / "sweep.json").read_text())
    assert entries[1]["error"] == "fixed point cap reached"
    assert entries[2]["summary"] == {"A": 3.0}
