import json
from pathlib import Path

import pytest
from lsst.ts.nlkg.errors import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK
from lsst.ts.nlkg.harness.cli import build_parser, resolve_config, run_nlkg


def write_config(path: Path, **acceptance: object) -> Path:
    section = {"criteria": [10], "synthetic_series": 3}
    section.update(acceptance)
    path.write_text(json.dumps({"name": "cli-test", "acceptance": section}))
    return path


def test_verify_from_a_config_file(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    config_path = write_config(tmp_path / "verify.json")
    out = tmp_path / "run"
    argv = ["--log-level", "ERROR", "verify", "--config", str(config_path)]
    code = run_nlkg(argv + ["--out", str(out)])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary == {"criteria": [10], "passed": True}
    assert (out / "acceptance.json").is_file()
    assert (out / "manifest.json").is_file()


def test_failed_acceptance_exit_code(tmp_path: Path) -> None:
    config_path = write_config(tmp_path / "verify.json", rate_tolerance=-1.0)
    code = run_nlkg(
        ["verify", "--config", str(config_path), "--out", str(tmp_path / "run")]
    )
    assert code == EXIT_ACCEPTANCE


def test_coarse_grid_verify_exit_code(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    config_path = write_config(
        tmp_path / "verify.json",
        criteria=[2, 3],
        betas=[0.0, 0.5],
        boosted_grid={"half_width": 32.0, "n": 64},
    )
    out = tmp_path / "run"
    argv = ["--log-level", "ERROR", "verify", "--config", str(config_path)]
    code = run_nlkg(argv + ["--out", str(out)])
    assert code == EXIT_ACCEPTANCE
    message = capsys.readouterr().err
    assert "eigen-residual" in message
    assert "refine the grid" in message
    summary = json.loads((out / "acceptance.json").read_text())
    assert summary["passed"] is False


def test_configuration_errors(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    assert run_nlkg(["spectrum", "--config", "no-such-preset"]) == EXIT_CONFIG
    assert run_nlkg(["spectrum", "--resolution", "0"]) == EXIT_CONFIG
    bad = tmp_path / "bad.yaml"
    bad.write_text("grid:\n  n: 17\n")
    capsys.readouterr()
    assert run_nlkg(["spectrum", "--config", str(bad)]) == EXIT_CONFIG
    assert "grid.n" in capsys.readouterr().err


def test_parser() -> None:
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["analyze"])
    args = parser.parse_args(["construct", "--seed", "7", "--resolution", "2"])
    cfg = resolve_config(args)
    assert cfg.name == "single"
    assert cfg.seed == 7
    assert cfg.grid.n == 1024
    assert cfg.solver.dt == pytest.approx(0.0025)
