"""Plain-CSV reading and writing of partially observed matrices and results.

Floats are written with ``repr`` so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .maskedmat import MaskedMatrix, StructureError, project

NA_TOKEN = "NA"


class ParseError(ValueError):
    def __init__(self, path, row: int, col: int, cell: str):
        super().__init__(f"{path}: row {row}, column {col}: cannot parse {cell!r} as a number")
        self.row, self.col, self.cell = row, col, cell


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _read_rows(path, delimiter):
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh, delimiter=delimiter) if row]


def read_matrix(
    path,
    na_token: str = NA_TOKEN,
    header: bool | None = None,
    delimiter: str = ",",
    mask_path=None,
) -> MaskedMatrix:
    """Load a CSV into a :class:`MaskedMatrix`.

    Cells equal to ``na_token`` (or empty) are missing. ``header=None``
    skips the first row only if it contains a non-numeric, non-NA cell.
    With ``mask_path`` (a 0/1 CSV of the same shape) the mask comes from
    that file and masked-out cells may hold anything numeric.
    Row and column numbers in errors are 1-based file positions.
    """
    rows = _read_rows(path, delimiter)
    if not rows:
        raise StructureError(f"{path}: no data rows")
    start = 0
    if header is None:
        header = any(c.strip() not in ("", na_token) and not _is_number(c) for c in rows[0])
    if header:
        start = 1
    body = rows[start:]
    if not body:
        raise StructureError(f"{path}: no data rows")
    p = len(body[0])
    values = np.zeros((len(body), p))
    mask = np.ones((len(body), p), dtype=bool)
    for i, row in enumerate(body):
        if len(row) != p:
            raise StructureError(f"{path}: row {i + start + 1} has {len(row)} cells, expected {p}")
        for j, cell in enumerate(row):
            c = cell.strip()
            if c == na_token or c == "":
                mask[i, j] = False
                continue
            try:
                values[i, j] = float(c)
            except ValueError:
                raise ParseError(path, i + start + 1, j + 1, cell) from None
            if not math.isfinite(values[i, j]):
                raise ParseError(path, i + start + 1, j + 1, cell)
    if mask_path is not None:
        given = read_int_matrix(mask_path, delimiter)
        if given.shape != values.shape:
            raise StructureError(f"mask {given.shape} does not match values {values.shape}")
        if not np.isin(given, (0, 1)).all():
            raise StructureError("mask entries must be 0 or 1")
        if (~mask & (given == 1)).any():
            raise StructureError("mask marks an NA cell as observed")
        mask = given.astype(bool)
    return project(values, mask)


def read_int_matrix(path, delimiter: str = ",") -> np.ndarray:
    rows = _read_rows(path, delimiter)
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    out = []
    for i, row in enumerate(rows):
        try:
            out.append([int(c) for c in row])
        except ValueError:
            bad = next(j for j, c in enumerate(row) if not c.strip().lstrip("-").isdigit())
            raise ParseError(path, i + 1, bad + 1, row[bad]) from None
    return np.asarray(out, dtype=np.int64)


def read_vector(path) -> np.ndarray:
    return read_int_matrix(path).ravel()


def _fmt(x: float) -> str:
    return repr(float(x))


def write_matrix(path, m: MaskedMatrix, na_token: str = NA_TOKEN, delimiter: str = ","):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        for vals, obs in zip(m.values, m.mask):
            w.writerow([_fmt(v) if o else na_token for v, o in zip(vals, obs)])


def write_dense(path, a, delimiter: str = ","):
    a = np.atleast_2d(np.asarray(a))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        for row in a:
            w.writerow([_fmt(v) if np.issubdtype(a.dtype, np.floating) else int(v) for v in row])


def write_mask(path, mask, delimiter: str = ","):
    write_dense(path, np.asarray(mask, dtype=np.int64), delimiter)


def write_vector(path, v, name: str | None = None):
    v = np.asarray(v)
    with open(path, "w", newline="") as fh:
        if name:
            fh.write(name + "\n")
        for x in v:
            fh.write((_fmt(x) if np.issubdtype(v.dtype, np.floating) else str(int(x))) + "\n")


def write_records(path, records: list[dict], fields: list[str] | None = None):
    fields = fields or (list(records[0]) if records else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in records:
            w.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in r.items()})


def read_records(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_keyvalue(path, items: dict):
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in items.items()))


def read_keyvalue(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            k, _, v = line.partition(" = ")
            out[k.strip()] = v
    return out
