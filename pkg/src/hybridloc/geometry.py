"""Circle / grid-cell intersection areas.

The exact area uses a signed-quadrant decomposition: for a circle at the
origin, ``_quadrant_area(x, y)`` is the signed area of the disc inside the
rectangle spanned by the origin and ``(x, y)``. The area inside any
axis-aligned rectangle then follows by inclusion-exclusion over its four
corners. All helpers broadcast over numpy arrays so a whole block of cells is
handled in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import InvalidArgument
from .model import CellId, GridSpec, Point

AREA_EPS = 1e-9  # m^2; overlaps below this are dropped from assignments


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float

    def __post_init__(self):
        if not self.radius >= 0:
            raise InvalidArgument("radius must be >= 0")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2


def _segment(t, r):
    """Integral of sqrt(r^2 - u^2) for u in [t, r], 0 <= t <= r.

    Angle form with theta = acos(t / r) taken from r - t, which stays accurate
    when t is close to r (where the textbook antiderivative loses half its digits).
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = 2.0 * np.arcsin(np.sqrt(np.clip((r - t) / (2.0 * r), 0.0, 1.0)))
    return np.where(r > 0, 0.5 * r * r * (theta - 0.5 * np.sin(2.0 * theta)), 0.0)


def _first_quadrant_area(x, y, r):
    """Area of the disc of radius r (at the origin) inside [0, x] x [0, y], x, y >= 0."""
    x = np.minimum(x, r)
    y = np.minimum(y, r)
    # the arc crosses height y at abscissa xs
    xs = np.sqrt(np.maximum((r - y) * (r + y), 0.0))
    lo = np.minimum(x, xs)
    arc = np.where(x > lo, _segment(lo, r) - _segment(x, r), 0.0)
    return y * lo + arc


def _quadrant_area(x, y, r):
    return np.sign(x) * np.sign(y) * _first_quadrant_area(np.abs(x), np.abs(y), r)


def rect_circle_area(cx, cy, r, xmin, ymin, xmax, ymax):
    """Exact area of circle (cx, cy, r) intersected with [xmin, xmax] x [ymin, ymax].

    Rectangle bounds may be numpy arrays; the result has their broadcast shape.
    """
    r = float(r)
    if r == 0.0:
        return np.zeros(np.broadcast(xmin, ymin, xmax, ymax).shape)[()]
    x0 = np.asarray(xmin, dtype=float) - cx
    x1 = np.asarray(xmax, dtype=float) - cx
    y0 = np.asarray(ymin, dtype=float) - cy
    y1 = np.asarray(ymax, dtype=float) - cy
    area = (
        _quadrant_area(x1, y1, r)
        - _quadrant_area(x0, y1, r)
        - _quadrant_area(x1, y0, r)
        + _quadrant_area(x0, y0, r)
    )
    return np.clip(area, 0.0, None)[()]


def circle_cell_area(circle: Circle, cell_id: CellId, grid: GridSpec) -> float:
    """Exact intersection area (m^2) of ``circle`` with one grid cell."""
    xmin, ymin, xmax, ymax = grid.cell_bounds(cell_id)
    area = float(rect_circle_area(circle.center[0], circle.center[1], circle.radius, xmin, ymin, xmax, ymax))
    return min(area, circle.area, grid.cell_size ** 2)


def mc_circle_cell_area(circle: Circle, cell_id: CellId, grid: GridSpec, n_samples: int, seed=None) -> float:
    """Monte Carlo estimate: fraction of uniform points in the circle that land in the cell, times pi r^2."""
    if int(n_samples) < 1:
        raise InvalidArgument("n_samples must be >= 1")
    xmin, ymin, xmax, ymax = grid.cell_bounds(cell_id)
    cx, cy = circle.center
    r = circle.radius
    # disjoint: no sample can land in the cell
    dx = max(xmin - cx, 0.0, cx - xmax)
    dy = max(ymin - cy, 0.0, cy - ymax)
    if r == 0.0 or dx * dx + dy * dy >= r * r:
        return 0.0
    rng = np.random.default_rng(seed)
    rad = r * np.sqrt(rng.random(int(n_samples)))
    theta = rng.random(int(n_samples)) * (2.0 * math.pi)
    px = cx + rad * np.cos(theta)
    py = cy + rad * np.sin(theta)
    inside = (px >= xmin) & (px < xmax) & (py >= ymin) & (py < ymax)
    return float(np.count_nonzero(inside)) / int(n_samples) * circle.area


def _cell_block(circle: Circle, grid: GridSpec):
    """Column/row index ranges of the grid cells touching the circle's bounding box."""
    (cx, cy), r, s = circle.center, circle.radius, grid.cell_size
    x0, y0 = grid.origin
    c0 = max(int(math.floor((cx - r - x0) / s)), 0)
    c1 = min(int(math.floor((cx + r - x0) / s)), grid.cols - 1)
    r0 = max(int(math.floor((cy - r - y0) / s)), 0)
    r1 = min(int(math.floor((cy + r - y0) / s)), grid.rows - 1)
    return np.arange(c0, c1 + 1), np.arange(r0, r1 + 1)


def intersection_areas(circle: Circle, grid: GridSpec) -> List[Tuple[CellId, float]]:
    """All (cell, area) pairs with area above ``AREA_EPS``, in row-major order."""
    cols, rows = _cell_block(circle, grid)
    if cols.size == 0 or rows.size == 0:
        return []
    s = grid.cell_size
    x0, y0 = grid.origin
    cc, rr = np.meshgrid(cols, rows)  # rows outer -> row-major after ravel
    area = rect_circle_area(
        circle.center[0], circle.center[1], circle.radius,
        x0 + cc * s, y0 + rr * s, x0 + (cc + 1) * s, y0 + (rr + 1) * s,
    )
    keep = np.atleast_1d(area > AREA_EPS).ravel()
    return [
        ((int(c), int(r)), float(a))
        for c, r, a in zip(cc.ravel()[keep], rr.ravel()[keep], np.atleast_1d(area).ravel()[keep])
    ]


def assignment_weights(circle: Circle, grid: GridSpec) -> List[Tuple[CellId, float]]:
    """Cell weights A_i / (pi c^2) for a label assumed uniform in its confidence circle.

    Weights sum to one when the circle lies inside the grid and to the covered
    fraction otherwise.
    """
    if not circle.radius > 0:
        raise InvalidArgument("assignment_weights needs a positive radius")
    total = circle.area
    return [(cell, a / total) for cell, a in intersection_areas(circle, grid)]
