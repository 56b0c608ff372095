"""Matrix files.

Two formats:

* CSV (RFC 4180), row-major, optional header row, floats written with 17
  significant digits.
* Binary: magic b"MPRJMAT1", rows and cols as little-endian uint64, then
  rows*cols little-endian float64 in row-major order.

Readers sniff the magic, so the extension does not matter when reading.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from ..constraints import GroupStructure

MAGIC = b"MPRJMAT1"


class MatrixFormatError(ValueError):
    pass


def write_matrix(path, a, fmt: str | None = None, header=None) -> Path:
    path = Path(path)
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise MatrixFormatError(f"can only write 1-D or 2-D arrays, got {a.ndim}-D")
    fmt = fmt or ("bin" if path.suffix == ".bin" else "csv")
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<QQ", *a.shape))
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            if header is not None:
                w.writerow(header)
            for row in a:
                w.writerow([format(v, ".17g") for v in row])
    else:
        raise MatrixFormatError(f"unknown matrix format {fmt!r}")
    return path


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
        if head == MAGIC:
            dims = fh.read(16)
            if len(dims) != 16:
                raise MatrixFormatError(f"{path}: truncated header")
            rows, cols = struct.unpack("<QQ", dims)
            payload = fh.read()
            if len(payload) != rows * cols * 8:
                raise MatrixFormatError(
                    f"{path}: expected {rows * cols * 8} payload bytes, got {len(payload)}")
            return np.frombuffer(payload, dtype="<f8").astype(float).reshape(rows, cols)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        return np.zeros((0, 0))
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        data = [[float(v) for v in r] for r in rows]
    except ValueError as exc:
        raise MatrixFormatError(f"{path}: non-numeric entry ({exc})") from exc
    if len({len(r) for r in data}) > 1:
        raise MatrixFormatError(f"{path}: ragged rows")
    return np.array(data, dtype=float).reshape(len(data), -1 if data else 0)


def read_vector(path) -> np.ndarray:
    a = read_matrix(path)
    if 1 not in a.shape and a.size:
        raise MatrixFormatError(f"{path}: expected a vector, got shape {a.shape}")
    return a.ravel()


def parse_groups(text: str, d: int) -> GroupStructure:
    """``uniform:SIZE`` or a JSON file holding a list of index lists, or
    ``{"groups": [...], "costs": [...]}``."""
    if text.startswith("uniform:"):
        return GroupStructure.uniform_blocks(d, int(text.split(":", 1)[1]))
    with open(text) as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        return GroupStructure(d, tuple(raw["groups"]), raw.get("costs"))
    return GroupStructure(d, tuple(raw))


def write_groups(path, groups: GroupStructure) -> None:
    with open(path, "w") as fh:
        json.dump({"groups": [list(g) for g in groups.groups],
                   "costs": list(groups.costs)}, fh)
