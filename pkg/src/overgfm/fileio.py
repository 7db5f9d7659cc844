"""Delimited text files for data, schemas and result matrices, plus run manifests.

Every matrix file has a header row and one data row per matrix row. Floats are
written with ``repr`` (shortest round-trip form), so reading a file back gives
the identical doubles.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Column, DataError, MixedDataMatrix, SchemaError, VariableSchema


class FileFormatError(DataError):
    """A file could not be parsed; the message names the file and line."""


def _fmt(v) -> str:
    v = float(v)
    if v == 0:
        return "0"  # drop the sign of -0.0 and the trailing ".0"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_text_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path, M, header=None, prefix: str = "V"):
    """Write a 1-d or 2-d array; 1-d arrays become a single column."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if header is None:
        header = [f"{prefix}{k + 1}" for k in range(M.shape[1])]
    if len(header) != M.shape[1]:
        raise ValueError("header length does not match the number of columns")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in M:
        w.writerow([_fmt(v) for v in row])
    write_text_atomic(path, buf.getvalue())


def _read_rows(path):
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FileFormatError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    except csv.Error as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    # keep 1-based line numbers, skip blank lines
    return [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]


def _parse_float(s, path, line, col):
    try:
        return float(s)
    except ValueError:
        raise FileFormatError(f"{path}, line {line}, column {col}: not a number: {s!r}") from None


def read_matrix(path, header: bool = True):
    """Read a numeric matrix. Returns ``(array, column_names)``."""
    rows = _read_rows(path)
    if not rows:
        raise FileFormatError(f"{path}: empty file")
    names = None
    if header:
        names = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    width = len(names) if names is not None else len(rows[0][1])
    out = np.empty((len(rows), width))
    for k, (line, r) in enumerate(rows):
        if len(r) != width:
            raise FileFormatError(f"{path}, line {line}: expected {width} fields, got {len(r)}")
        for j, s in enumerate(r):
            out[k, j] = _parse_float(s.strip(), path, line, j + 1)
    return out, names


def read_vector(path):
    """Read a single column of reals. A non-numeric first line is taken as a header."""
    rows = _read_rows(path)
    if rows:
        try:
            float(rows[0][1][0])
        except ValueError:
            rows = rows[1:]
    vals = []
    for line, r in rows:
        if len(r) != 1:
            raise FileFormatError(f"{path}, line {line}: expected one value, got {len(r)}")
        vals.append(_parse_float(r[0].strip(), path, line, 1))
    return np.array(vals, dtype=float)


def write_schema(path, schema: VariableSchema):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "kind", "trials"])
    for c in schema.columns:
        w.writerow([c.name, c.kind.value, "" if c.trials is None else c.trials])
    write_text_atomic(path, buf.getvalue())


def read_schema(path) -> VariableSchema:
    rows = _read_rows(path)
    if not rows:
        raise FileFormatError(f"{path}: empty schema file")
    head = [c.strip().lower() for c in rows[0][1]]
    if head[:2] != ["name", "kind"]:
        raise FileFormatError(f"{path}, line {rows[0][0]}: header must start with 'name,kind'")
    cols = []
    for line, r in rows[1:]:
        r = [c.strip() for c in r]
        if len(r) not in (2, 3):
            raise FileFormatError(f"{path}, line {line}: expected name,kind[,trials]")
        trials = None
        if len(r) == 3 and r[2] != "":
            try:
                trials = int(r[2])
            except ValueError:
                raise FileFormatError(f"{path}, line {line}: trials must be an integer, got {r[2]!r}") from None
        try:
            cols.append(Column(r[0], r[1], trials))
        except ValueError as exc:
            raise FileFormatError(f"{path}, line {line}: {exc}") from None
    try:
        return VariableSchema(cols)
    except SchemaError as exc:
        raise FileFormatError(f"{path}: {exc}") from None


def read_data(data_path, schema: VariableSchema, offsets_path=None) -> MixedDataMatrix:
    """Read a data CSV whose header must list the schema's column names in order."""
    X, names = read_matrix(data_path)
    if names != schema.names:
        missing = [n for n in schema.names if n not in names]
        raise FileFormatError(
            f"{data_path}, line 1: header does not match schema"
            + (f" (missing {missing[:3]})" if missing else " (order differs)")
        )
    offsets = None
    if offsets_path is not None:
        offsets = read_vector(offsets_path)
        if offsets.shape[0] != X.shape[0]:
            raise FileFormatError(
                f"{offsets_path}: {offsets.shape[0]} offsets for {X.shape[0]} data rows"
            )
    return MixedDataMatrix(X, offsets)


def write_data(path, data: MixedDataMatrix, schema: VariableSchema):
    write_matrix(path, data.X, header=schema.names)


# -- manifests -------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config: dict
    seed: object = None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    duration_seconds: float = 0.0
    version: str = ""
    started: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": {k: str(v) for k, v in self.inputs.items()},
            "outputs": {k: str(v) for k, v in self.outputs.items()},
            "duration_seconds": self.duration_seconds,
            "version": self.version,
            "started": self.started,
        }

    def write(self, path):
        write_text_atomic(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
