"""CSV and configuration files used by the command line."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

CONFIG_SCHEMA = 1

# protocol constants; each is a config key
DEFAULT_CONFIG = {
    "schema_version": CONFIG_SCHEMA,
    "kernel": "matern52",
    "knots": None,
    "constraints": [],
    "fixed": {},
    "minimal": False,
    "domain": None,
    "n_starts": 10,
    "seed": 0,
    "sampler": "hmc",
    "n_samples": 10_000,
    "burn_in": 100,
    "thinning": 200,
    "quantiles": [0.025, 0.975],
    "resolution": 101,
}


class InputError(ValueError):
    """Malformed user input (bad CSV, bad config)."""


def _parse_float(text: str, line: int, col: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"line {line}, column {col}: {text!r} is not a number") from None


def read_csv(path):
    """Read a headed numeric CSV; returns ``(header, data)``.

    Raises
    ------
    InputError
        Missing header (line 1 is numeric), ragged rows, non-numeric cells,
        or no data rows (``"no observations"``).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh)]
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: no observations")
    header = [c.strip() for c in rows[0]]
    if all(_is_number(c) for c in header):
        raise InputError(f"{path}: line 1 must be a header row naming the columns")
    if len(set(header)) != len(header) or any(not h for h in header):
        raise InputError(f"{path}: line 1 has empty or duplicate column names")
    body = rows[1:]
    if not body:
        raise InputError(f"{path}: no observations")
    data = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise InputError(f"{path}: line {line} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            data[i, j] = _parse_float(cell.strip(), line, j + 1)
    return header, data


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_dataset(path):
    """Inputs and outputs from a CSV whose last column is the response."""
    header, data = read_csv(path)
    if data.shape[1] < 2:
        raise InputError(f"{path}: need at least one input column and one output column")
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: non-finite values")
    return data[:, :-1], data[:, -1], header


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_csv(path, header, columns) -> None:
    """Write columns (sequence of equal-length 1D arrays) with a header."""
    cols = [np.asarray(c).ravel() for c in columns]
    if len(cols) != len(header):
        raise ValueError("one header entry per column is required")
    n = cols[0].size if cols else 0
    if any(c.size != n for c in cols):
        raise ValueError("columns differ in length")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            w.writerow([c[i] if c.dtype.kind in "OUS" else _fmt(c[i]) for c in cols])


def write_table(path, records) -> None:
    """Write a list of dicts (same keys) as CSV; strings kept, numbers repr'd."""
    if not records:
        raise ValueError("no records")
    keys = list(records[0])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in records:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in (r[k] for k in keys)])


def read_table(path) -> list:
    """Read a CSV written by :func:`write_table` into a list of dicts."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (float(v) if _is_number(v) else v) for k, v in r.items()})
    return out


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then the JSON file at ``path``, then ``overrides`` (non-None values)."""
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise InputError(f"{path}: config must be a JSON object")
        version = data.get("schema_version")
        if version != CONFIG_SCHEMA:
            raise InputError(f"{path}: schema_version {version!r} is not supported "
                             f"(expected {CONFIG_SCHEMA})")
        unknown = set(data) - set(DEFAULT_CONFIG)
        if unknown:
            raise InputError(f"{path}: unknown config keys {sorted(unknown)}")
        cfg.update(data)
    for k, v in (overrides or {}).items():
        if v is not None and v != [] and v != {}:
            cfg[k] = v
    return cfg


def write_json(path, data) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
