"""File emission: atomic writes, delimited series and curves, JSON summaries.

Numbers are written with repr-style formatting (decimal point, no locale
grouping), headers are always present, and files land via a temp-file
rename so partially written artifacts never appear under the final name.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .cutoff import TVCurve

__all__ = [
    "atomic_write_text",
    "write_csv",
    "write_json",
    "write_series_csv",
    "write_curve_csv",
    "curve_csv_name",
    "json_ready",
]


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return atomic_write_text(path, "\n".join(lines) + "\n")


def json_ready(obj):
    """Recursively convert numpy scalars/arrays for json.dumps."""
    if isinstance(obj, dict):
        return {k: json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: str | Path, obj: dict) -> Path:
    text = json.dumps(json_ready(obj), indent=2, sort_keys=True)
    return atomic_write_text(path, text + "\n")


def write_series_csv(path: str | Path, ns, values) -> Path:
    return write_csv(path, ["n", "value"], zip(ns, values))


def curve_csv_name(curve: TVCurve, scaling: str) -> str:
    cfg = curve.config
    return f"cutoff_{cfg.activation.name}_n{cfg.width}_{scaling}"


def write_curve_csv(curve: TVCurve, path: str | Path) -> Path:
    header = ["depth", "tv_raw", "tv_normalized", "origin_mass", "occupied_bins"]
    rows = zip(curve.depths, curve.tv_raw, curve.tv_normalized,
               curve.origin_mass, curve.occupied_bins)
    return write_csv(path, header, rows)
