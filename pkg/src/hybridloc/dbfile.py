"""Line-oriented text format for finalized fingerprints.

::

    FPDB v1 <cols> <rows> <cell_size> <origin_x> <origin_y>
    C <col> <row> <total_weight> <centroid_x> <centroid_y>
    <col> <row> <ap_id> <weight_sum> <mean> <variance>
    ...
    END <record_count>

Floats are written with 17 significant digits so a save/load cycle is
bit-exact. ``record_count`` counts every line between header and trailer.
"""

from __future__ import annotations

import io
import os
from typing import IO, Union

from .errors import ChecksumMismatch, InvalidArgument, MalformedRecord, UnsupportedVersion
from .fingerprint import DEFAULT_MIN_CELL_WEIGHT
from .model import FORMAT_VERSION, ApStats, CellStats, FingerprintDb, GridSpec

PathOrFile = Union[str, os.PathLike, IO[str]]


def _f(x: float) -> str:
    return format(float(x), ".17g")


def dumps(db: FingerprintDb) -> str:
    g = db.grid
    lines = [f"FPDB v{FORMAT_VERSION} {g.cols} {g.rows} {_f(g.cell_size)} {_f(g.origin[0])} {_f(g.origin[1])}"]
    for cid in sorted(db.cells, key=g.index):
        cell = db.cells[cid]
        col, row = cid
        lines.append(f"C {col} {row} {_f(cell.total_weight)} {_f(cell.mass_centroid[0])} {_f(cell.mass_centroid[1])}")
        for ap in sorted(cell.per_ap):
            if not ap or any(ch.isspace() for ch in ap):
                raise InvalidArgument(f"AP id {ap!r} cannot be written (empty or contains whitespace)")
            st = cell.per_ap[ap]
            if st.variance is None:
                raise InvalidArgument("only finalized fingerprints can be saved")
            lines.append(f"{col} {row} {ap} {_f(st.weight_sum)} {_f(st.mean)} {_f(st.variance)}")
    lines.append(f"END {len(lines) - 1}")
    return "\n".join(lines) + "\n"


def save_db(db: FingerprintDb, sink: PathOrFile) -> None:
    text = dumps(db)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)


def _num(tok: str, lineno: int, kind=float):
    try:
        return kind(tok)
    except ValueError:
        raise MalformedRecord(f"line {lineno}: bad number {tok!r}") from None


def loads(text: str, min_cell_weight: float = DEFAULT_MIN_CELL_WEIGHT) -> FingerprintDb:
    lines = text.splitlines()
    if not lines:
        raise MalformedRecord("empty file")
    head = lines[0].split()
    if len(head) < 2 or head[0] != "FPDB" or not head[1].startswith("v"):
        raise MalformedRecord("missing FPDB header")
    version = _num(head[1][1:], 1, int)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"file version {version}, supported {FORMAT_VERSION}")
    if len(head) != 7:
        raise MalformedRecord("line 1: header needs 7 fields")
    try:
        grid = GridSpec(
            (_num(head[5], 1), _num(head[6], 1)), _num(head[4], 1), _num(head[2], 1, int), _num(head[3], 1, int)
        )
    except InvalidArgument as exc:
        raise MalformedRecord(f"line 1: {exc}") from None

    cell_rows = {}
    ap_rows = {}
    count = 0
    trailer = None
    for lineno, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if trailer is not None:
            raise MalformedRecord(f"line {lineno}: data after END")
        if not tok:
            raise MalformedRecord(f"line {lineno}: blank line")
        if tok[0] == "END":
            if len(tok) != 2:
                raise MalformedRecord(f"line {lineno}: bad END record")
            trailer = _num(tok[1], lineno, int)
            continue
        count += 1
        if tok[0] == "C":
            if len(tok) != 6:
                raise MalformedRecord(f"line {lineno}: cell record needs 6 fields")
            cid = (_num(tok[1], lineno, int), _num(tok[2], lineno, int))
            if cid in cell_rows:
                raise MalformedRecord(f"line {lineno}: duplicate cell {cid}")
            cell_rows[cid] = (_num(tok[3], lineno), (_num(tok[4], lineno), _num(tok[5], lineno)))
        else:
            if len(tok) != 6:
                raise MalformedRecord(f"line {lineno}: AP record needs 6 fields")
            cid = (_num(tok[0], lineno, int), _num(tok[1], lineno, int))
            per = ap_rows.setdefault(cid, {})
            if tok[2] in per:
                raise MalformedRecord(f"line {lineno}: duplicate AP {tok[2]} in cell {cid}")
            w, mean, var = (_num(t, lineno) for t in tok[3:6])
            per[tok[2]] = ApStats(w, mean, var, var * w)
    if trailer is None:
        raise MalformedRecord("missing END record (truncated file?)")
    if trailer != count:
        raise ChecksumMismatch(f"END says {trailer} records, read {count}")
    if set(ap_rows) - set(cell_rows):
        raise MalformedRecord(f"AP records for cells without a C record: {sorted(set(ap_rows) - set(cell_rows))}")

    cells = {}
    for cid, (tw, centroid) in cell_rows.items():
        if not (0 <= cid[0] < grid.cols and 0 <= cid[1] < grid.rows):
            raise MalformedRecord(f"cell {cid} outside the {grid.cols}x{grid.rows} grid")
        cells[cid] = CellStats(cid, ap_rows.get(cid, {}), centroid, tw, usable=tw >= min_cell_weight)
    return FingerprintDb(grid, cells, frozenset(), min_cell_weight)


def load_db(source: PathOrFile, min_cell_weight: float = DEFAULT_MIN_CELL_WEIGHT) -> FingerprintDb:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    return loads(text, min_cell_weight)


def roundtrip(db: FingerprintDb) -> FingerprintDb:
    buf = io.StringIO()
    save_db(db, buf)
    return loads(buf.getvalue(), db.min_cell_weight)
