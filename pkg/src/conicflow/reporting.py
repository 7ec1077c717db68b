"""CSV, JSON and checkpoint I/O."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .monitors import CSV_COLUMNS, MonitorSample


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path: Path, samples: Iterable[MonitorSample]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s in samples:
            w.writerow([_fmt(x) for x in s.row()])
    return path


def read_csv(path: Path) -> dict[str, np.ndarray]:
    """Columns of a monitor CSV as float arrays; needs at least ``t`` and ``sup_R``."""
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    if not rows or "t" not in rows[0] or "sup_R" not in rows[0]:
        raise ConfigurationError(f"{path}: header must contain 't' and 'sup_R'")
    header = rows[0]
    body = [r for r in rows[1:] if r]
    if not body:
        raise ConfigurationError(f"{path}: no data rows")
    try:
        data = np.array([[float(x) for x in r] for r in body])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: non-numeric entry ({exc})") from exc
    if data.shape[1] != len(header):
        raise ConfigurationError(f"{path}: ragged rows")
    return {name: data[:, i] for i, name in enumerate(header)}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
    return path


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(_clean(config), sort_keys=True).encode()).hexdigest()[:16]


def write_checkpoint(stem: Path, phi: Sequence[np.ndarray], t: float, eps: float, grid_sizes: Sequence[int], scenario_hash: str) -> Path:
    """Flat float64 potential (factors concatenated) plus a JSON sidecar."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    np.concatenate([np.asarray(p, dtype="<f8") for p in phi]).tofile(stem.with_suffix(".bin"))
    write_json(
        stem.with_suffix(".json"),
        {"t": t, "eps": eps, "grid": list(grid_sizes), "scenario_hash": scenario_hash, "dtype": "<f8"},
    )
    return stem.with_suffix(".bin")


def read_checkpoint(stem: Path) -> tuple[list[np.ndarray], dict]:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    flat = np.fromfile(stem.with_suffix(".bin"), dtype=meta.get("dtype", "<f8"))
    sizes = meta["grid"]
    if flat.size != sum(sizes):
        raise ConfigurationError("checkpoint size does not match its sidecar")
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    return [p.astype(float) for p in parts], meta
