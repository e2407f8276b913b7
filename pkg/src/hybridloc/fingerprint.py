"""Offline phase: turn location-tagged WiFi scans into a per-cell Gaussian radio map.

A :class:`FingerprintBuilder` accumulates weighted first/second moments per
(cell, AP) with a streaming update that is exact for any ingestion order, and
freezes them into a :class:`~hybridloc.model.FingerprintDb` on
:meth:`FingerprintBuilder.finalize`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .errors import EmptyFingerprint, InvalidArgument, OutOfArea, UnusableCell
from .geometry import Circle, assignment_weights, intersection_areas
from .model import (
    ApStats,
    AssignmentStrategy,
    CellId,
    CellStats,
    FingerprintDb,
    GridSpec,
    GroundTruthEstimate,
    Point,
    RepresentativeMode,
    TaggedScan,
)

log = logging.getLogger(__name__)

DEFAULT_SIGMA_FLOOR = 1.0  # dB^2
DEFAULT_MIN_CELL_WEIGHT = 3.0

_UNSET = object()


@dataclass(frozen=True)
class BuilderConfig:
    grid: GridSpec
    strategy: AssignmentStrategy = AssignmentStrategy.WEIGHTED_CONFIDENCE
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    min_cell_weight: float = DEFAULT_MIN_CELL_WEIGHT
    # Estimate a per-source-device RSS offset against the running global
    # per-AP means and remove it before accumulating.
    device_offset_correction: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", AssignmentStrategy(self.strategy))
        if not self.sigma_floor > 0:
            raise InvalidArgument("sigma_floor must be > 0")
        if not self.min_cell_weight >= 0:
            raise InvalidArgument("min_cell_weight must be >= 0")


def assign_scan(truth: GroundTruthEstimate, config: BuilderConfig) -> List[Tuple[CellId, float]]:
    """Cells (and weights) a labelled scan contributes to under the configured strategy."""
    grid = config.grid
    if not grid.contains(truth.location):
        raise OutOfArea(f"label {truth.location} outside grid")
    radius = truth.confidence_radius
    if config.strategy is AssignmentStrategy.LOCATION_ONLY or radius == 0:
        return [(grid.cell_of(truth.location), 1.0)]
    circle = Circle(truth.location, radius)
    if config.strategy is AssignmentStrategy.UNWEIGHTED_CONFIDENCE:
        return [(cell, 1.0) for cell, _ in intersection_areas(circle, grid)]
    return assignment_weights(circle, grid)


class FingerprintBuilder:
    """Single-writer accumulator for one fingerprint.

    Parallel construction goes through :meth:`merge`: build shards
    independently, then fold them together.
    """

    def __init__(self, config: BuilderConfig):
        self.config = config
        self.grid = config.grid
        n = self.grid.n_cells
        self._ap_index: dict = {}
        self._ap_ids: list = []
        cap = 16
        self._w = np.zeros((n, cap))
        self._mean = np.zeros((n, cap))
        self._m2 = np.zeros((n, cap))
        self._cell_w = np.zeros(n)
        self._cell_xy = np.zeros((n, 2))  # weighted sums of label coordinates
        self.ingested = 0
        self.skipped = 0
        # device offset bookkeeping (only used with device_offset_correction)
        self._global_w: dict = {}
        self._global_mean: dict = {}
        self._device_resid: dict = {}  # device -> (count, mean residual)
        self._reference = _UNSET

    # -- AP columns -----------------------------------------------------
    def _columns(self, ap_ids) -> np.ndarray:
        cols = []
        for ap in ap_ids:
            j = self._ap_index.get(ap)
            if j is None:
                j = len(self._ap_ids)
                self._ap_index[ap] = j
                self._ap_ids.append(ap)
                if j >= self._w.shape[1]:
                    self._grow()
            cols.append(j)
        return np.asarray(cols, dtype=np.intp)

    def _grow(self):
        pad = self._w.shape[1]
        self._w = np.pad(self._w, ((0, 0), (0, pad)))
        self._mean = np.pad(self._mean, ((0, 0), (0, pad)))
        self._m2 = np.pad(self._m2, ((0, 0), (0, pad)))

    @property
    def ap_universe(self) -> frozenset:
        return frozenset(self._ap_ids)

    # -- ingestion --------------------------------------------------------
    def device_offset(self, device_id) -> float:
        entry = self._device_resid.get(device_id)
        return entry[1] if entry else 0.0

    def _correct_device(self, scan: TaggedScan, values: np.ndarray, ap_ids) -> np.ndarray:
        # The first device heard is the reference: its readings alone define the
        # per-AP reference means, so corrected data from other devices cannot
        # feed back into their own offset estimates.
        device = scan.device_id
        if self._reference is _UNSET:
            self._reference = device
        if device == self._reference:
            for a, v in zip(ap_ids, values):
                w = self._global_w.get(a, 0) + 1
                m = self._global_mean.get(a, 0.0)
                self._global_w[a] = w
                self._global_mean[a] = m + (v - m) / w
            return values
        n, mu = self._device_resid.get(device, (0, 0.0))
        for a, v in zip(ap_ids, values):
            if a in self._global_mean:
                n += 1
                mu += (v - self._global_mean[a] - mu) / n
        self._device_resid[device] = (n, mu)
        return values - mu

    def ingest(self, scan: TaggedScan) -> bool:
        """Add one tagged scan. Returns False (and counts it) if it is empty or labelled outside the grid."""
        if len(scan.wifi) == 0:
            self.skipped += 1
            return False
        try:
            assigned = assign_scan(scan.truth, self.config)
        except OutOfArea:
            self.skipped += 1
            return False
        self.ingested += 1
        if not assigned:
            return True
        ap_ids = [a for a, _ in scan.wifi.readings]
        values = np.array([v for _, v in scan.wifi.readings])
        if self.config.device_offset_correction:
            values = self._correct_device(scan, values, ap_ids)
        cols = self._columns(ap_ids)
        rows = np.array([self.grid.index(c) for c, _ in assigned], dtype=np.intp)
        weights = np.array([w for _, w in assigned])

        # weighted streaming moments, vectorised over the (cells x APs) block
        block = np.ix_(rows, cols)
        w_old = self._w[block]
        w_new = w_old + weights[:, None]
        mean_old = self._mean[block]
        delta = values[None, :] - mean_old
        mean_new = mean_old + delta * (weights[:, None] / w_new)
        self._m2[block] += weights[:, None] * delta * (values[None, :] - mean_new)
        self._mean[block] = mean_new
        self._w[block] = w_new

        # centre of mass of points inside the cell: a spread label counts at
        # its nearest point within each cell it contributes to
        g = self.grid
        lx, ly = scan.truth.location
        cc = np.array([c for c, _ in assigned], dtype=float)
        x0 = g.origin[0] + cc[:, 0] * g.cell_size
        y0 = g.origin[1] + cc[:, 1] * g.cell_size
        self._cell_w[rows] += weights
        self._cell_xy[rows, 0] += weights * np.clip(lx, x0, x0 + g.cell_size)
        self._cell_xy[rows, 1] += weights * np.clip(ly, y0, y0 + g.cell_size)
        return True

    def ingest_all(self, scans: Iterable[TaggedScan]) -> "FingerprintBuilder":
        for scan in scans:
            self.ingest(scan)
        return self

    def merge(self, other: "FingerprintBuilder") -> "FingerprintBuilder":
        """Fold another builder over the same grid into this one (pairwise moment combination)."""
        if other.grid != self.grid:
            raise InvalidArgument("cannot merge builders over different grids")
        cols = self._columns(other._ap_ids)
        k = len(other._ap_ids)
        wa = self._w[:, cols]
        wb = other._w[:, :k]
        ma = self._mean[:, cols]
        mb = other._mean[:, :k]
        w = wa + wb
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(w > 0, wb / w, 0.0)
        delta = mb - ma
        self._mean[:, cols] = ma + delta * frac
        self._m2[:, cols] = self._m2[:, cols] + other._m2[:, :k] + delta * delta * wa * frac
        self._w[:, cols] = w
        self._cell_w += other._cell_w
        self._cell_xy += other._cell_xy
        self.ingested += other.ingested
        self.skipped += other.skipped
        return self

    # -- read-out -----------------------------------------------------------
    def raw_stats(self, cell: CellId, ap_id: str) -> Optional[ApStats]:
        """Un-finalized statistics for one (cell, AP), or None if never observed."""
        j = self._ap_index.get(ap_id)
        i = self.grid.index(cell)
        if j is None or self._w[i, j] <= 0:
            return None
        return ApStats(float(self._w[i, j]), float(self._mean[i, j]), None, float(self._m2[i, j]))

    def total_weight(self) -> float:
        return float(self._cell_w.sum())

    def finalize(self) -> FingerprintDb:
        """Clamp variances, flag sparse cells unusable and return the read-only fingerprint."""
        cfg = self.config
        cells = {}
        n_ap = len(self._ap_ids)
        for i in np.flatnonzero(self._cell_w > 0):
            cid = self.grid.cell_at(int(i))
            tw = float(self._cell_w[i])
            per_ap = {}
            for j in np.flatnonzero(self._w[i, :n_ap] > 0):
                w = float(self._w[i, j])
                m2 = float(self._m2[i, j])
                per_ap[self._ap_ids[j]] = ApStats(w, float(self._mean[i, j]), max(m2 / w, cfg.sigma_floor), m2)
            centroid = (float(self._cell_xy[i, 0] / tw), float(self._cell_xy[i, 1] / tw))
            cells[cid] = CellStats(cid, per_ap, centroid, tw, usable=tw >= cfg.min_cell_weight)
        db = FingerprintDb(self.grid, cells, frozenset(self._ap_ids), cfg.min_cell_weight)
        if not any(c.usable for c in cells.values()):
            raise EmptyFingerprint(
                f"no cell reached min_cell_weight={cfg.min_cell_weight} "
                f"({self.ingested} scans ingested, {self.skipped} skipped)"
            )
        if self.skipped:
            log.info("skipped %d out-of-area scans", self.skipped)
        return db


def build_fingerprint(scans: Iterable[TaggedScan], config: BuilderConfig) -> FingerprintDb:
    return FingerprintBuilder(config).ingest_all(scans).finalize()


def representative_location(cell: CellStats, mode: RepresentativeMode, grid: GridSpec) -> Point:
    if not cell.usable:
        raise UnusableCell(f"cell {cell.cell_id} is below the minimum training weight")
    if RepresentativeMode(mode) is RepresentativeMode.GEOMETRIC_CENTER:
        return grid.center(cell.cell_id)
    return cell.mass_centroid
