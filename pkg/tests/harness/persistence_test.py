import json
from pathlib import Path

import numpy as np
import pytest
from lsst.ts.nlkg.errors import ChecksumError, ConfigError, GridMismatchError
from lsst.ts.nlkg.harness.persistence import (
    MANIFEST_NAME,
    SNAPSHOT_MAGIC,
    RunWriter,
    config_hash,
    decode_snapshot,
    encode_csv,
    encode_snapshot,
    read_csv,
    read_manifest,
    read_snapshot,
    verify_manifest,
)
from lsst.ts.nlkg.models.models import FieldState
from lsst.ts.nlkg.spectral import SpectralBundle

from ..conftest import COARSE_GRID, GRID, single_config


@pytest.fixture
def state() -> FieldState:
    rng = np.random.default_rng(11)
    return FieldState(
        u1=rng.standard_normal(GRID.n), u2=rng.standard_normal(GRID.n), t=2.5
    )


def test_snapshot_layout(state: FieldState) -> None:
    data = encode_snapshot(state, GRID)
    assert data.startswith(SNAPSHOT_MAGIC)
    assert len(data) == 25 + 16 * GRID.n
    decoded, grid = decode_snapshot(data, GRID)
    assert grid == GRID
    assert decoded.t == 2.5
    assert np.array_equal(decoded.pair, state.pair)


def test_snapshot_decoding_errors(state: FieldState) -> None:
    data = encode_snapshot(state, GRID)
    with pytest.raises(ConfigError):
        decode_snapshot(data[:10])
    with pytest.raises(ConfigError):
        decode_snapshot(b"XXXXX" + data[5:])
    with pytest.raises(ConfigError):
        decode_snapshot(data[:-8])
    with pytest.raises(GridMismatchError):
        decode_snapshot(data, COARSE_GRID)
    with pytest.raises(GridMismatchError):
        encode_snapshot(state, COARSE_GRID)


def test_csv(tmp_path: Path) -> None:
    path = tmp_path / "series.csv"
    path.write_bytes(encode_csv({"t": [0.0, 0.5], "value": np.array([1e-17, 3.0])}))
    assert path.read_text().splitlines()[0] == "t,value"
    columns = read_csv(path)
    assert list(columns) == ["t", "value"]
    assert np.array_equal(columns["value"], [1e-17, 3.0])
    with pytest.raises(ConfigError):
        encode_csv({"t": [0.0, 1.0], "value": [1.0]})
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ConfigError):
        read_csv(empty)


def test_config_hash_tracks_the_configuration() -> None:
    assert config_hash(single_config()) == config_hash(single_config())
    assert config_hash(single_config()) != config_hash(single_config(A=[2.0]))


def test_run_writer_manifest(tmp_path: Path, state: FieldState) -> None:
    cfg = single_config()
    writer = RunWriter(tmp_path / "run", "construct", cfg)
    writer.write_json("report.json", {"value": np.float64(1.5), "bad": np.inf})
    writer.write_csv("series.csv", {"t": [1.0, 2.0]})
    writer.write_snapshot("states/a.bin", state, GRID)
    (writer.root / "extra.txt").write_text("notes\n")
    writer.adopt("extra.txt")
    writer.stage("single", "done")
    path = writer.finish()
    assert path.name == MANIFEST_NAME

    manifest = verify_manifest(tmp_path / "run")
    assert manifest.command == "construct"
    assert manifest.config_hash == config_hash(cfg)
    assert manifest.stages == {"single": "done"}
    paths = [artifact.path for artifact in manifest.artifacts]
    assert paths == sorted(paths)
    assert "states/a.bin" in paths
    kinds = {artifact.path: artifact.kind for artifact in manifest.artifacts}
    assert kinds["config.json"] == "config"
    assert kinds["series.csv"] == "series"
    report = json.loads((writer.root / "report.json").read_text())
    assert report == {"bad": "inf", "value": 1.5}
    loaded, _ = read_snapshot(writer.root / "states/a.bin", GRID)
    assert np.array_equal(loaded.u2, state.u2)


def test_tampered_run_fails_verification(tmp_path: Path, state: FieldState) -> None:
    writer = RunWriter(tmp_path, "construct", single_config())
    writer.write_snapshot("a.bin", state, GRID)
    writer.write_json("b.json", [1, 2])
    writer.finish()
    (tmp_path / "b.json").write_text("[1, 3]\n")
    with pytest.raises(ChecksumError):
        verify_manifest(tmp_path)
    (tmp_path / "b.json").unlink()
    with pytest.raises(ChecksumError):
        verify_manifest(tmp_path)


def test_missing_files(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        read_manifest(tmp_path)
    writer = RunWriter(tmp_path, "spectrum", single_config())
    with pytest.raises(ConfigError):
        writer.adopt("absent.bin")


def test_write_bundle(tmp_path: Path, single_bundle: SpectralBundle) -> None:
    writer = RunWriter(tmp_path, "spectrum", single_config())
    writer.write_bundle("bundles/beta_0", single_bundle)
    writer.finish()
    manifest = verify_manifest(tmp_path)
    snapshots = [a.path for a in manifest.artifacts if a.kind == "snapshot"]
    assert len(snapshots) == 7
    zplus, _ = read_snapshot(tmp_path / "bundles/beta_0.zplus.bin", GRID)
    assert np.array_equal(zplus.pair, single_bundle.zplus)
    metadata = json.loads((tmp_path / "bundles/beta_0.json").read_text())
    assert metadata["beta"] == 0.5
