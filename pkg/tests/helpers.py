"""Shared builders for hand-made fingerprints and the direct-evaluation posterior oracle."""

import math

from hybridloc.estimator import MISSING_AP_MEAN, MISSING_AP_VAR
from hybridloc.model import ApStats, CellStats, FingerprintDb, GridSpec


def make_db(grid: GridSpec, table, weight=5.0, min_cell_weight=1.0) -> FingerprintDb:
    """table: {cell: {ap: (mean, variance)}}; every listed cell is usable."""
    cells = {}
    for cid, aps in table.items():
        per_ap = {a: ApStats(weight, m, v, v * weight) for a, (m, v) in aps.items()}
        cells[cid] = CellStats(cid, per_ap, grid.center(cid), weight)
    return FingerprintDb(grid, cells, frozenset(a for aps in table.values() for a in aps), min_cell_weight)


def density(s, mean, var):
    return math.exp(-((s - mean) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)


def brute_posterior(readings, db, offset_correction=False):
    """Direct product of per-AP densities per usable cell, normalized over all usable cells."""
    scores = {}
    for cid in db.usable_cells():
        per_ap = db.cells[cid].per_ap
        shared = [(a, s) for a, s in readings if a in per_ap]
        if not shared:
            scores[cid] = 0.0
            continue
        lam = inflate = 0.0
        if offset_correction:
            lam = sum(s - per_ap[a].mean for a, s in shared) / len(shared)
            inflate = sum(per_ap[a].variance for a, _ in shared) / len(shared) ** 2
        p = 1.0
        for a, s in readings:
            if a in per_ap:
                p *= density(s - lam, per_ap[a].mean, per_ap[a].variance + inflate)
            else:
                p *= density(s - lam, MISSING_AP_MEAN, MISSING_AP_VAR)
        scores[cid] = p
    z = sum(scores.values())
    return {c: v / z for c, v in scores.items()}


# acceptance results, printed by the terminal-summary hook in conftest.py
ACCEPTANCE_LINES = []


def record(number: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
