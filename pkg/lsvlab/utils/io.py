from __future__ import annotations

"""CSV and JSON writers with checksums and sidecar metadata."""

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.17g"


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats for json.dump."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "model_dump"):
        return to_jsonable(value.model_dump(mode="json"))
    return value


def write_json(path: Path, payload: Any) -> str:
    """Write sorted, indented JSON and return its sha256."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    return sha256_file(path)


def write_table(
    path: Path,
    frame: pd.DataFrame,
    units: Optional[dict[str, str]] = None,
    provenance: Optional[dict[str, Any]] = None,
) -> str:
    """Write a CSV with header row plus a ``.meta.json`` sidecar.

    The sidecar lists each column's unit and the provenance fields. Both
    files are deterministic functions of their inputs.

    Returns:
        sha256 of the CSV payload.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    units = units or {}
    write_json(
        path.with_suffix(".meta.json"),
        {
            "file": path.name,
            "rows": len(frame),
            "columns": [{"name": c, "unit": units.get(c, "")} for c in frame.columns],
            "provenance": provenance or {},
        },
    )
    return sha256_file(path)


def read_table(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)


def config_hash(config: dict[str, Any]) -> str:
    """sha256 of the canonical JSON form of a config mapping."""
    canonical = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
