import hashlib
import io
import json
import traceback
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "get_exception_traceback_str",
    "sha256_file",
    "sha256_bytes",
    "canonical_json",
    "to_jsonable",
]


def get_exception_traceback_str(exc: Exception) -> str:
    # Ref: https://stackoverflow.com/a/76584117/
    file = io.StringIO()
    traceback.print_exception(exc, file=file)
    return file.getvalue().rstrip()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as file:
        for chunk in iter(lambda: file.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays and nested containers to plain JSON
    types. Non-finite floats become strings so the output stays strict
    JSON.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if np.isfinite(value):
            return value
        return repr(value)
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def canonical_json(obj: Any) -> str:
    """Byte-stable JSON: sorted keys, fixed separators, shortest-repr
    floats."""
    return json.dumps(
        to_jsonable(obj), sort_keys=True, indent=2, separators=(",", ": ")
    )
