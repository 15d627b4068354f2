import json
from pathlib import Path

import pytest
from lsst.ts.nlkg.errors import ConfigError
from lsst.ts.nlkg.models.models import GridSpec
from lsst.ts.nlkg.models.models_init import (
    ConfigLoader,
    describe_validation_error,
    load_experiment_config,
)
from pydantic import ValidationError


def test_presets() -> None:
    loader = ConfigLoader()
    assert loader.preset_names() == ["acceptance", "multi", "single", "spectrum"]
    multi = loader.load("multi")
    assert multi.name == "multi"
    assert multi.construction.N == 2
    assert [spec.beta for spec in multi.construction.specs] == [0.8, 0.4]
    assert load_experiment_config("single").sweep[0] == [-1.0]


@pytest.mark.parametrize(
    "name, text",
    [
        ("run.toml", 'name = "toml-run"\n\n[grid]\nn = 256\n'),
        ("run.json", json.dumps({"name": "json-run", "grid": {"n": 256}})),
        ("run.yaml", "name: yaml-run\ngrid:\n  n: 256\n"),
    ],
)
def test_load_files(tmp_path: Path, name: str, text: str) -> None:
    path = tmp_path / name
    path.write_text(text)
    cfg = load_experiment_config(path)
    assert cfg.name.endswith("-run")
    assert cfg.grid.n == 256


@pytest.mark.parametrize(
    "name, text",
    [
        ("run.ini", "[grid]\n"),
        ("run.json", "{not json"),
        ("run.yaml", "- 1\n- 2\n"),
        ("run.toml", "[grid]\nn = 17\n"),
        ("run.json", json.dumps({"grid": {"points": 10}})),
    ],
)
def test_load_errors(tmp_path: Path, name: str, text: str) -> None:
    path = tmp_path / name
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_experiment_config(path)


def test_missing_source(tmp_path: Path) -> None:
    with pytest.raises(ConfigError, match="no-such"):
        load_experiment_config(tmp_path / "no-such.toml")


def test_describe_validation_error() -> None:
    with pytest.raises(ValidationError) as excinfo:
        GridSpec(half_width=-1.0, n=7)
    message = describe_validation_error(excinfo.value)
    assert message.startswith("half_width: ")
    assert "; n: " in message
