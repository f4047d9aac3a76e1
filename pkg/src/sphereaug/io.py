"""Feature CSV files, JSON documents and metrics streams.

Feature files are plain text::

    label,dim=3
    0,0.59999999999999998,0.80000000000000004,0
    1,...

Values are written with 17 significant digits, which round-trips every
double exactly. Files written by ``transform`` carry two extra leading
columns, ``src_label`` and ``transform``, announced in the header.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import SchemaMismatch


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_features(path, X, y, src_labels=None, kinds=None) -> None:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    dim = X.shape[1]
    with_prov = src_labels is not None
    head = "label,src_label,transform," if with_prov else "label,"
    lines = [f"{head}dim={dim}"]
    for i in range(X.shape[0]):
        prefix = f"{int(y[i])},{int(src_labels[i])},{kinds[i]}," if with_prov else f"{int(y[i])},"
        lines.append(prefix + ",".join(fmt(v) for v in X[i]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_features(path):
    """Parse a feature file.

    Returns:
        ``(X, y, provenance)`` where ``provenance`` is ``None`` for plain
        files and ``(src_labels, kinds)`` for transform output.

    Raises:
        SchemaMismatch: malformed header, ragged rows, negative or
            non-integer labels, or non-finite values.
    """
    text = Path(path).read_text().splitlines()
    if not text:
        raise SchemaMismatch(f"{path}: empty file")
    header = text[0].strip().split(",")
    if not header[-1].startswith("dim="):
        raise SchemaMismatch(f"{path}: header must end with dim=D, got {text[0]!r}")
    try:
        dim = int(header[-1][4:])
    except ValueError:
        raise SchemaMismatch(f"{path}: bad dimension in header {text[0]!r}") from None
    lead = header[:-1]
    if lead not in (["label"], ["label", "src_label", "transform"]):
        raise SchemaMismatch(f"{path}: unrecognised header {text[0]!r}")
    n_lead = len(lead)
    X = np.empty((len(text) - 1, dim))
    y = np.empty(len(text) - 1, dtype=np.int64)
    src, kinds = [], []
    rows = 0
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_lead + dim:
            raise SchemaMismatch(f"{path}:{lineno}: expected {n_lead + dim} fields, got {len(parts)}")
        try:
            label = int(parts[0])
            vals = [float(v) for v in parts[n_lead:]]
            if n_lead == 3:
                src.append(int(parts[1]))
                kinds.append(parts[2])
        except ValueError as err:
            raise SchemaMismatch(f"{path}:{lineno}: {err}") from None
        if label < 0:
            raise SchemaMismatch(f"{path}:{lineno}: negative label {label}")
        if not all(math.isfinite(v) for v in vals):
            raise SchemaMismatch(f"{path}:{lineno}: non-finite value")
        y[rows] = label
        X[rows] = vals
        rows += 1
    prov = (np.array(src, dtype=np.int64), kinds) if n_lead == 3 else None
    return X[:rows], y[:rows], prov


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


class MetricsWriter:
    """Line-per-iteration CSV with a fixed column order."""

    def __init__(self, path, columns):
        self.columns = tuple(columns)
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.columns)

    def write(self, row: dict) -> None:
        self._w.writerow([fmt(row[c]) if isinstance(row[c], float) else row[c] for c in self.columns])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
