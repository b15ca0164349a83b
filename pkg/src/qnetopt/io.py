"""JSON readers and writers for matrices, layouts and reports."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import LayoutError
from .layout import SystemLayout
from .netmodel import LabeledOperator


class InputError(ValueError):
    """Malformed input file; the message carries the offending field path."""


def matrix_to_dict(op: np.ndarray | LabeledOperator, dims=None, labels=None) -> dict:
    if isinstance(op, LabeledOperator):
        dims, labels, m = list(op.dims), list(op.labels), op.op
    else:
        m = np.asarray(op)
        dims = [m.shape[0]] if dims is None else list(dims)
        labels = [str(i) for i in range(len(dims))] if labels is None else list(labels)
    entries = [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]
    return {"dims": [int(d) for d in dims], "labels": labels, "entries": entries}


def matrix_from_dict(data: Any, where: str = "matrix") -> tuple[np.ndarray, list[int], list[str]]:
    if not isinstance(data, Mapping):
        raise InputError(f"{where}: expected an object")
    for key in ("dims", "entries"):
        if key not in data:
            raise InputError(f"{where}.{key}: missing")
    dims = data["dims"]
    if not isinstance(dims, list) or not dims or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in dims):
        raise InputError(f"{where}.dims: expected a non-empty list of positive integers")
    labels = data.get("labels", [str(i) for i in range(len(dims))])
    if not isinstance(labels, list) or len(labels) != len(dims) or not all(isinstance(s, str) for s in labels):
        raise InputError(f"{where}.labels: expected {len(dims)} strings")
    n = int(np.prod(dims))
    rows = data["entries"]
    if not isinstance(rows, list) or len(rows) != n:
        raise InputError(f"{where}.entries: expected {n} rows for dims {dims}")
    m = np.zeros((n, n), dtype=complex)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise InputError(f"{where}.entries[{i}]: expected {n} entries (matrix must be square)")
        for j, z in enumerate(row):
            if isinstance(z, (int, float)) and not isinstance(z, bool):
                m[i, j] = float(z)
            elif isinstance(z, list) and len(z) == 2 and all(isinstance(t, (int, float)) for t in z):
                m[i, j] = complex(z[0], z[1])
            else:
                raise InputError(f"{where}.entries[{i}][{j}]: expected [re, im]")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{where}.entries: non-finite values")
    return m, list(dims), list(labels)


def read_json(path: str | Path) -> Any:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_matrix(path: str | Path) -> tuple[np.ndarray, list[int], list[str]]:
    return matrix_from_dict(read_json(path), str(path))


def save_matrix(path: str | Path, op, dims=None, labels=None) -> None:
    Path(path).write_text(json.dumps(matrix_to_dict(op, dims, labels)))


def load_operator(data: Any, layout: SystemLayout | None, where: str) -> LabeledOperator:
    """A matrix object bound to ``layout`` (labels must agree) or to its own labels."""
    m, dims, labels = matrix_from_dict(data, where)
    if layout is None:
        layout = SystemLayout.from_dims(dims, labels)
        return LabeledOperator(layout, m)
    own = SystemLayout.from_dims(dims, labels)
    if sorted(labels) != sorted(layout.labels):
        raise InputError(f"{where}.labels: {labels} do not match layout labels {list(layout.labels)}")
    for lab, d in zip(labels, dims):
        if layout.system(lab).dim != d:
            raise InputError(f"{where}.dims: system {lab!r} has dim {d}, layout says {layout.system(lab).dim}")
    try:
        return LabeledOperator(layout, LabeledOperator(own, m).aligned(layout))
    except LayoutError as exc:
        raise InputError(f"{where}: {exc}") from None


def load_layout(data: Any, where: str = "layout") -> SystemLayout:
    try:
        return SystemLayout.from_dict(data)
    except LayoutError as exc:
        raise InputError(f"{where}: {exc}") from None


def digest(*blobs: bytes) -> str:
    h = hashlib.sha256()
    for b in blobs:
        h.update(b)
    return h.hexdigest()
