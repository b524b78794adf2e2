"""Output plumbing: CSV tables with comment headers, raw field snapshots, config files."""

from __future__ import annotations

import csv
import json
import math
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import InvalidParameterError

OUTPUT_ROOT_ENV = "DLNFLOW_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "dlnflow-output"


def output_root(explicit: Optional[str] = None) -> Path:
    """Explicit path, else ``$DLNFLOW_OUTPUT_ROOT``, else ``./dlnflow-output``."""
    return Path(explicit or os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)


def format_value(x) -> str:
    """Shortest round-tripping text for floats; everything else via ``str``."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence],
              meta: Optional[Mapping[str, object]] = None, timestamp: bool = True) -> Path:
    """Write ``rows`` under a header row, preceded by ``# key: value`` comment lines.

    Anything run-dependent (the timestamp) lives in the comment block only, so
    the body is a pure function of the inputs.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if timestamp:
            fh.write(f"# created: {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
        for key, value in (meta or {}).items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise InvalidParameterError("row length does not match the header")
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path):
    """Return ``(meta, columns, rows)`` with rows as lists of strings."""
    meta, body = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            else:
                body.append(line)
    table = list(csv.reader(body))
    return meta, table[0], table[1:]


def csv_body(path) -> str:
    """The CSV text with comment lines removed, for byte comparisons."""
    with Path(path).open() as fh:
        return "".join(line for line in fh if not line.startswith("#"))


def write_snapshot(path, grid, state, nu: float) -> Path:
    """Physical velocity as little-endian float64, shape (2, n, n), plus a text header.

    Writes ``<path>.bin`` and ``<path>.hdr``; returns the ``.bin`` path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(state.velocity(), dtype="<f8")
    data.tofile(path.with_suffix(".bin"))
    header = {"n": grid.n, "length": grid.length, "t": state.t, "nu": nu,
              "dtype": "<f8", "shape": "2 {0} {0}".format(grid.n), "order": "C"}
    path.with_suffix(".hdr").write_text("".join(f"{k} = {format_value(v)}\n" for k, v in header.items()))
    return path.with_suffix(".bin")


def read_snapshot(path):
    """Return ``(header, velocity)`` for a snapshot written by :func:`write_snapshot`."""
    path = Path(path)
    header = parse_key_values(path.with_suffix(".hdr").read_text())
    shape = tuple(int(s) for s in str(header["shape"]).split())
    data = np.fromfile(path.with_suffix(".bin"), dtype=header["dtype"]).reshape(shape)
    return header, data


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_key_values(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidParameterError(f"line {lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = _parse_scalar(value.strip())
    return out


def load_config(path) -> dict:
    """Read a JSON object or a ``key = value`` file into a dict."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise InvalidParameterError(f"bad JSON config: {exc}") from exc
        return {str(k).replace("-", "_"): v for k, v in data.items()}
    return parse_key_values(text)
