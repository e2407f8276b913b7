"""Domain types: scans, ground-truth labels, the cell grid and fingerprint records.

Everything here is an immutable value type. The only logic is invariant
checking and the grid arithmetic (point -> cell, cell -> center).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from enum import Enum
from typing import Iterator, Mapping, Optional, Tuple

import numpy as np

from .errors import InvalidArgument, InvalidCell, NotFinalized, OutOfArea

Point = Tuple[float, float]
CellId = Tuple[int, int]  # (col, row)

RSS_MIN = -110.0
RSS_MAX = 0.0


def _check_readings(readings, what: str) -> tuple:
    out = tuple((str(k), float(v)) for k, v in readings)
    seen = set()
    for key, rss in out:
        if key in seen:
            raise InvalidArgument(f"duplicate {what} id {key!r} in one scan")
        seen.add(key)
        if not (RSS_MIN <= rss <= RSS_MAX):
            raise InvalidArgument(f"rss {rss} for {key!r} outside [{RSS_MIN}, {RSS_MAX}] dBm")
    return out


@dataclass(frozen=True)
class WifiScan:
    """RSS readings from the access points heard at one instant."""

    timestamp: float
    readings: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "readings", _check_readings(self.readings, "AP"))

    def as_dict(self) -> dict:
        return dict(self.readings)

    @property
    def ap_ids(self) -> tuple:
        return tuple(k for k, _ in self.readings)

    def __len__(self) -> int:
        return len(self.readings)


@dataclass(frozen=True)
class BleScan:
    """RSS readings from the BLE beacons heard at one instant."""

    timestamp: float
    readings: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "readings", _check_readings(self.readings, "beacon"))

    def __len__(self) -> int:
        return len(self.readings)


@dataclass(frozen=True)
class GroundTruthEstimate:
    """A BLE-derived location label and the radius of its confidence circle."""

    location: Point
    confidence_radius: float

    def __post_init__(self):
        x, y = (float(v) for v in self.location)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise InvalidArgument("location must be finite")
        if not self.confidence_radius >= 0:
            raise InvalidArgument("confidence_radius must be >= 0")
        object.__setattr__(self, "location", (x, y))
        object.__setattr__(self, "confidence_radius", float(self.confidence_radius))


@dataclass(frozen=True)
class TaggedScan:
    wifi: WifiScan
    truth: GroundTruthEstimate
    device_id: Optional[str] = None


@dataclass(frozen=True)
class GridSpec:
    """Square cells of side ``cell_size`` laid out ``cols`` x ``rows`` from ``origin``.

    Cells are half-open: cell (c, r) covers [x0 + c*s, x0 + (c+1)*s) x [y0 + r*s, y0 + (r+1)*s).
    The far edges of the grid belong to the last column/row so the whole closed
    rectangle is addressable.
    """

    origin: Point
    cell_size: float
    cols: int
    rows: int

    def __post_init__(self):
        if not self.cell_size > 0:
            raise InvalidArgument("cell_size must be > 0")
        if int(self.cols) < 1 or int(self.rows) < 1:
            raise InvalidArgument("cols and rows must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "cols", int(self.cols))
        object.__setattr__(self, "rows", int(self.rows))

    @classmethod
    def covering(cls, width: float, height: float, cell_size: float, origin: Point = (0.0, 0.0)) -> "GridSpec":
        """Smallest grid of ``cell_size`` cells that covers a width x height rectangle."""
        if not cell_size > 0:
            raise InvalidArgument("cell_size must be > 0")
        cols = max(1, math.ceil(width / cell_size - 1e-9))
        rows = max(1, math.ceil(height / cell_size - 1e-9))
        return cls(origin, cell_size, cols, rows)

    @property
    def width(self) -> float:
        return self.cols * self.cell_size

    @property
    def height(self) -> float:
        return self.rows * self.cell_size

    @property
    def n_cells(self) -> int:
        return self.cols * self.rows

    def contains(self, point: Point) -> bool:
        x, y = point
        x0, y0 = self.origin
        return x0 <= x <= x0 + self.width and y0 <= y <= y0 + self.height

    def cell_of(self, point: Point) -> CellId:
        if not self.contains(point):
            raise OutOfArea(f"point {point} outside grid")
        x0, y0 = self.origin
        col = min(int(math.floor((point[0] - x0) / self.cell_size)), self.cols - 1)
        row = min(int(math.floor((point[1] - y0) / self.cell_size)), self.rows - 1)
        return col, row

    def check(self, cell: CellId) -> CellId:
        col, row = cell
        if not (0 <= col < self.cols and 0 <= row < self.rows):
            raise InvalidCell(f"cell {cell} not in {self.cols}x{self.rows} grid")
        return int(col), int(row)

    def center(self, cell: CellId) -> Point:
        col, row = self.check(cell)
        s = self.cell_size
        return self.origin[0] + (col + 0.5) * s, self.origin[1] + (row + 0.5) * s

    def cell_bounds(self, cell: CellId) -> Tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of a cell."""
        col, row = self.check(cell)
        s = self.cell_size
        x = self.origin[0] + col * s
        y = self.origin[1] + row * s
        return x, y, x + s, y + s

    def index(self, cell: CellId) -> int:
        """Row-major linear index."""
        col, row = self.check(cell)
        return row * self.cols + col

    def cell_at(self, index: int) -> CellId:
        if not 0 <= index < self.n_cells:
            raise InvalidCell(f"cell index {index} out of range")
        return index % self.cols, index // self.cols

    def cells(self) -> Iterator[CellId]:
        for row in range(self.rows):
            for col in range(self.cols):
                yield col, row


def cell_of(point: Point, grid: GridSpec) -> CellId:
    return grid.cell_of(point)


def cell_geometric_center(cell: CellId, grid: GridSpec) -> Point:
    return grid.center(cell)


@dataclass(frozen=True)
class ApStats:
    """Weighted Gaussian statistics of one AP inside one cell.

    ``variance`` is the weighted population variance; it is ``None`` until the
    owning fingerprint is finalized (the variance floor is applied then).
    """

    weight_sum: float
    mean: float
    variance: Optional[float] = None
    m2: float = field(default=0.0, compare=False)  # weighted sum of squared deviations

    @property
    def finalized(self) -> bool:
        return self.variance is not None

    @property
    def raw_variance(self) -> float:
        """Unclamped weighted variance."""
        return self.m2 / self.weight_sum if self.weight_sum > 0 else 0.0


@dataclass(frozen=True)
class CellStats:
    cell_id: CellId
    per_ap: Mapping[str, ApStats]
    mass_centroid: Point
    total_weight: float
    usable: bool = True


class AssignmentStrategy(str, Enum):
    LOCATION_ONLY = "location_only"
    UNWEIGHTED_CONFIDENCE = "unweighted_confidence"
    WEIGHTED_CONFIDENCE = "weighted_confidence"


class RepresentativeMode(str, Enum):
    GEOMETRIC_CENTER = "geometric_center"
    MASS_CENTROID = "mass_centroid"


class OffsetMode(str, Enum):
    PER_CELL = "per_cell"
    GLOBAL = "global"


@dataclass(frozen=True)
class TrackerConfig:
    """Online estimation settings. ``window_k`` is the temporal averaging window."""

    window_k: int = 10
    offset_correction: bool = False
    representative_mode: RepresentativeMode = RepresentativeMode.MASS_CENTROID
    spatial_com: bool = True
    offset_mode: OffsetMode = OffsetMode.PER_CELL

    def __post_init__(self):
        if int(self.window_k) < 1:
            raise InvalidArgument("window_k must be >= 1")
        object.__setattr__(self, "window_k", int(self.window_k))
        object.__setattr__(self, "representative_mode", RepresentativeMode(self.representative_mode))
        object.__setattr__(self, "offset_mode", OffsetMode(self.offset_mode))


FORMAT_VERSION = 1


@dataclass(frozen=True)
class FingerprintDb:
    """A finalized radio map: the grid plus per-cell statistics.

    Cells whose ``total_weight`` fell under the builder's ``min_cell_weight``
    are kept (so the file round-trips) but flagged unusable and never scored.
    """

    grid: GridSpec
    cells: Mapping[CellId, CellStats]
    ap_universe: frozenset = field(default_factory=frozenset)
    min_cell_weight: float = 0.0
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        universe = set(self.ap_universe)
        for cid, cell in self.cells.items():
            self.grid.check(cid)
            universe.update(cell.per_ap)
        object.__setattr__(self, "ap_universe", frozenset(universe))

    def usable_cells(self) -> list:
        """Usable cell ids in row-major order."""
        return sorted((c for c, s in self.cells.items() if s.usable), key=self.grid.index)

    def cell(self, cell_id: CellId) -> CellStats:
        self.grid.check(cell_id)
        try:
            return self.cells[cell_id]
        except KeyError:
            raise InvalidCell(f"cell {cell_id} has no fingerprint") from None

    @cached_property
    def dense(self) -> "DenseFingerprint":
        return DenseFingerprint.from_db(self)


@dataclass(frozen=True, eq=False)
class DenseFingerprint:
    """Usable cells of a fingerprint packed into (cells x APs) arrays.

    Missing (cell, AP) entries have ``present`` False and NaN statistics.
    """

    cells: Tuple[CellId, ...]
    ap_ids: Tuple[str, ...]
    ap_index: Mapping[str, int]
    means: np.ndarray
    variances: np.ndarray
    present: np.ndarray
    centers: np.ndarray
    centroids: np.ndarray

    @classmethod
    def from_db(cls, db: FingerprintDb) -> "DenseFingerprint":
        cells = tuple(db.usable_cells())
        ap_ids = tuple(sorted(db.ap_universe))
        ap_index = {a: i for i, a in enumerate(ap_ids)}
        shape = (len(cells), len(ap_ids))
        means = np.full(shape, np.nan)
        variances = np.full(shape, np.nan)
        present = np.zeros(shape, dtype=bool)
        for i, cid in enumerate(cells):
            for ap, st in db.cells[cid].per_ap.items():
                if st.variance is None:
                    raise NotFinalized(f"cell {cid} AP {ap} is not finalized")
                j = ap_index[ap]
                means[i, j] = st.mean
                variances[i, j] = st.variance
                present[i, j] = True
        centers = np.array([db.grid.center(c) for c in cells], dtype=float).reshape(-1, 2)
        centroids = np.array([db.cells[c].mass_centroid for c in cells], dtype=float).reshape(-1, 2)
        for arr in (means, variances, present, centers, centroids):
            arr.setflags(write=False)
        return cls(cells, ap_ids, ap_index, means, variances, present, centers, centroids)
