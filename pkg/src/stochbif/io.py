"""CSV and JSON writers for run outputs.

Floats are written with 17 significant digits so every value round-trips
exactly; identical inputs therefore give byte-identical files.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "STOCHBIF_OUTPUT_ROOT"


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return ""
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Header and rows of a CSV written by :func:`write_csv` (values as strings)."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_config_snapshot(path, config: dict) -> Path:
    """``key = value`` lines, sorted, in the same syntax the config file reader accepts."""
    lines = [f"{k} = {format_value(v)}" for k, v in sorted(config.items()) if v is not None]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_manifest(out_dir, command: str, files) -> Path:
    out_dir = Path(out_dir)
    entries = sorted(str(Path(f).relative_to(out_dir)) for f in files)
    return write_json(out_dir / "manifest.json",
                      {"schema_version": SCHEMA_VERSION, "command": command, "files": entries})


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
