"""Run directories: binary snapshots, JSON reports, CSV series and the
checksummed manifest tying them together.
"""

import csv
import struct
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from lsst.ts.nlkg.config import nlkg_logger
from lsst.ts.nlkg.errors import ChecksumError, ConfigError, GridMismatchError
from lsst.ts.nlkg.models.models import (
    ExperimentConfig,
    FieldState,
    GridSpec,
    RunManifest,
)
from lsst.ts.nlkg.spectral import SpectralBundle
from lsst.ts.nlkg.utils import canonical_json, sha256_bytes, sha256_file

__all__ = [
    "SNAPSHOT_MAGIC",
    "MANIFEST_NAME",
    "encode_snapshot",
    "decode_snapshot",
    "read_snapshot",
    "encode_csv",
    "read_csv",
    "config_hash",
    "RunWriter",
    "read_manifest",
    "verify_manifest",
    "BUNDLE_PROFILES",
]

logger = nlkg_logger()

SNAPSHOT_MAGIC = b"NLKG1"
_HEADER = struct.Struct("<5sIdd")
MANIFEST_NAME = "manifest.json"
BUNDLE_PROFILES = ("zplus", "zminus", "yplus", "yminus", "z0", "dxr", "ddxr")


def encode_snapshot(state: FieldState, grid: GridSpec) -> bytes:
    """Header (magic, u32 n, f64 half_width, f64 t) then u1 and u2 as
    little-endian float64.
    """
    state.check_grid(grid)
    header = _HEADER.pack(SNAPSHOT_MAGIC, grid.n, grid.half_width, state.t)
    body = np.concatenate([state.u1, state.u2]).astype("<f8").tobytes()
    return header + body


def decode_snapshot(
    data: bytes, grid: GridSpec | None = None
) -> tuple[FieldState, GridSpec]:
    """Inverse of `encode_snapshot`.

    Raises
    ------
    ConfigError
        Raised on a wrong magic or a truncated payload.
    GridMismatchError
        Raised when ``grid`` is given and differs from the stored one.
    """
    if len(data) < _HEADER.size:
        raise ConfigError(f"Snapshot of {len(data)} bytes has no complete header")
    magic, n, half_width, t = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ConfigError(f"Not a snapshot: magic {magic!r}")
    expected = _HEADER.size + 16 * n
    if len(data) != expected:
        raise ConfigError(f"Snapshot holds {len(data)} bytes, expected {expected}")
    stored = GridSpec(half_width=half_width, n=n)
    if grid is not None and grid != stored:
        raise GridMismatchError(
            f"Snapshot grid (L={half_width}, n={n}) differs from"
            f" (L={grid.half_width}, n={grid.n})"
        )
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    return FieldState(u1=values[:n], u2=values[n:], t=t), stored


def read_snapshot(
    path: Path | str, grid: GridSpec | None = None
) -> tuple[FieldState, GridSpec]:
    return decode_snapshot(Path(path).read_bytes(), grid)


def encode_csv(columns: Mapping[str, Sequence[float] | np.ndarray]) -> bytes:
    """Columns in insertion order, floats written with repr."""
    names = list(columns)
    arrays = [np.asarray(columns[name], dtype=float) for name in names]
    lengths = {array.size for array in arrays}
    if len(lengths) > 1:
        raise ConfigError(f"CSV columns have different lengths {sorted(lengths)}")
    lines = [",".join(names)]
    for row in zip(*arrays):
        lines.append(",".join(repr(float(value)) for value in row))
    return ("\n".join(lines) + "\n").encode()


def read_csv(path: Path | str) -> dict[str, np.ndarray]:
    with open(path, newline="") as file:
        reader = csv.reader(file)
        try:
            names = next(reader)
        except StopIteration:
            raise ConfigError(f"{path} is empty")
        rows = [[float(value) for value in row] for row in reader if row]
    table = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return {name: table[:, index] for index, name in enumerate(names)}


def config_hash(cfg: ExperimentConfig) -> str:
    return sha256_bytes(canonical_json(cfg.model_dump(mode="json")).encode())


def _versions() -> dict[str, str]:
    versions = {}
    for package in ("nlkg", "numpy", "scipy", "pydantic"):
        try:
            versions[package] = version(package)
        except PackageNotFoundError:
            versions[package] = "unknown"
    return versions


class RunWriter:
    """Writes the artifacts of one command into ``root`` and records each
    of them, with its SHA-256, in the manifest.

    Parameters
    ----------
    root : `Path`
        Run directory, created if missing.
    command : `str`
        Name of the subcommand producing the run.
    cfg : `ExperimentConfig`
        Configuration hashed into the manifest and saved as ``config.json``.
    """

    def __init__(self, root: Path | str, command: str, cfg: ExperimentConfig) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(
            command=command, config_hash=config_hash(cfg), versions=_versions()
        )
        self.write_json("config.json", cfg.model_dump(mode="json"), kind="config")

    def _write(self, name: str, data: bytes, kind: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.manifest.record(Path(name).as_posix(), sha256_bytes(data), kind)
        return path

    def write_json(self, name: str, obj: Any, kind: str = "report") -> Path:
        return self._write(name, (canonical_json(obj) + "\n").encode(), kind)

    def write_csv(
        self, name: str, columns: Mapping[str, Sequence[float] | np.ndarray]
    ) -> Path:
        return self._write(name, encode_csv(columns), "series")

    def write_snapshot(self, name: str, state: FieldState, grid: GridSpec) -> Path:
        return self._write(name, encode_snapshot(state, grid), "snapshot")

    def write_bundle(self, prefix: str, bundle: SpectralBundle) -> Path:
        """Bundle metadata as JSON plus one snapshot per (2, n) profile."""
        for name in BUNDLE_PROFILES:
            profile = getattr(bundle, name)
            self.write_snapshot(
                f"{prefix}.{name}.bin", FieldState.from_pair(profile), bundle.grid
            )
        return self.write_json(f"{prefix}.json", bundle.metadata(), kind="bundle")

    def adopt(self, name: str, kind: str = "file") -> None:
        """Record a file written into the run directory by someone else."""
        path = self.root / name
        if not path.is_file():
            raise ConfigError(f"Cannot record missing file {path}")
        self.manifest.record(Path(name).as_posix(), sha256_file(path), kind)

    def stage(self, name: str, status: str) -> None:
        self.manifest.stages[name] = status

    def warn(self, message: str) -> None:
        """Note a departure from the documented defaults in the manifest."""
        logger.warning("Run warning", root=str(self.root), detail=message)
        self.manifest.warnings.append(message)

    def finish(self) -> Path:
        path = self.root / MANIFEST_NAME
        path.write_text(canonical_json(self.manifest.model_dump()) + "\n")
        logger.info(
            "Run written",
            root=str(self.root),
            command=self.manifest.command,
            artifacts=len(self.manifest.artifacts),
        )
        return path


def read_manifest(root: Path | str) -> RunManifest:
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise ConfigError(f"No manifest in {root}")
    return RunManifest.model_validate_json(path.read_text())


def verify_manifest(root: Path | str) -> RunManifest:
    """Check that every recorded artifact exists with its checksum.

    Raises
    ------
    ChecksumError
        Raised for a missing or modified artifact.
    """
    root = Path(root)
    manifest = read_manifest(root)
    for artifact in manifest.artifacts:
        path = root / artifact.path
        if not path.is_file():
            raise ChecksumError(
                f"{artifact.path} is listed in the manifest but missing"
            )
        digest = sha256_file(path)
        if digest != artifact.sha256:
            raise ChecksumError(
                f"{artifact.path} has checksum {digest}, the manifest records"
                f" {artifact.sha256}"
            )
    return manifest
