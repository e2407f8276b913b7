"""Online phase: score cells against a WiFi scan and turn the scores into positions.

All likelihood arithmetic is done in the log domain. The batched scorer
(:func:`log_likelihood_matrix`) is what the tracker and harness use; the
per-cell functions (:func:`cell_log_likelihood` and friends) are the readable
single-scan path and are kept numerically identical to it.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyFingerprint, InvalidArgument, NoOverlap, NotFinalized
from .model import (
    ApStats,
    CellId,
    CellStats,
    FingerprintDb,
    OffsetMode,
    Point,
    RepresentativeMode,
    TrackerConfig,
    WifiScan,
)

# An AP heard in the scan but never seen in a cell is scored as if the cell
# expected a reading near receiver sensitivity.
MISSING_AP_MEAN = -95.0  # dBm
MISSING_AP_VAR = 25.0  # dB^2

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_CHUNK_ELEMENTS = 2_000_000


def gaussian_density(s: float, stats: ApStats) -> float:
    """N(s; mean, variance) for one AP's finalized statistics."""
    if stats.variance is None:
        raise NotFinalized("ApStats has no finalized variance")
    sigma = math.sqrt(stats.variance)
    return math.exp(-((s - stats.mean) ** 2) / (2.0 * stats.variance)) / (sigma * math.sqrt(2.0 * math.pi))


def _log_normal(x, mean, var):
    return -0.5 * (x - mean) ** 2 / var - 0.5 * np.log(var) - _LOG_SQRT_2PI


def common_offset(scan: WifiScan, cell: CellStats) -> float:
    """Mean residual between the scan and the cell's per-AP means over shared APs."""
    shared = [(s, cell.per_ap[a].mean) for a, s in scan.readings if a in cell.per_ap]
    if not shared:
        raise NoOverlap(f"scan shares no AP with cell {cell.cell_id}")
    return math.fsum(s - mu for s, mu in shared) / len(shared)


def cell_log_likelihood(
    scan: WifiScan, cell: CellStats, offset_correction: bool = False, offset: Optional[float] = None
) -> float:
    """log P(scan | cell), optionally after removing a common device offset.

    ``offset`` overrides the per-cell offset estimate (used for the global
    offset variant).
    """
    shared = [(a, s) for a, s in scan.readings if a in cell.per_ap]
    if not shared:
        raise NoOverlap(f"scan shares no AP with cell {cell.cell_id}")
    for a, _ in shared:
        if cell.per_ap[a].variance is None:
            raise NotFinalized(f"cell {cell.cell_id} is not finalized")
    lam = 0.0
    inflate = 0.0
    if offset_correction:
        q = len(shared)
        lam = common_offset(scan, cell) if offset is None else offset
        inflate = math.fsum(cell.per_ap[a].variance for a, _ in shared) / (q * q)
    total = 0.0
    for a, s in scan.readings:
        st = cell.per_ap.get(a)
        if st is None:
            total += float(_log_normal(s - lam, MISSING_AP_MEAN, MISSING_AP_VAR))
        else:
            total += float(_log_normal(s - lam, st.mean, st.variance + inflate))
    return total


@dataclass(frozen=True, eq=False)
class CellPosterior:
    """Posterior over the usable cells of a fingerprint (row-major order)."""

    cells: Tuple[CellId, ...]
    probabilities: np.ndarray
    log_evidence: float

    @property
    def entries(self) -> List[Tuple[CellId, float]]:
        return [(c, float(p)) for c, p in zip(self.cells, self.probabilities)]

    @property
    def best(self) -> CellId:
        return self.cells[int(np.argmax(self.probabilities))]

    def top(self, n: int) -> List[Tuple[CellId, float]]:
        order = np.argsort(-self.probabilities, kind="stable")[:n]
        return [(self.cells[i], float(self.probabilities[i])) for i in order]


def _global_means(db: FingerprintDb) -> np.ndarray:
    d = db.dense
    w = np.array([[db.cells[c].per_ap[a].weight_sum if a in db.cells[c].per_ap else 0.0 for a in d.ap_ids] for c in d.cells])
    w = w.reshape(len(d.cells), len(d.ap_ids))
    tot = w.sum(axis=0)
    with np.errstate(invalid="ignore"):
        return np.where(tot > 0, np.nansum(np.nan_to_num(d.means) * w, axis=0) / np.where(tot > 0, tot, 1), np.nan)


def _scan_matrix(scans: Sequence[WifiScan], ap_index: dict):
    """Pack scans into (S x A') value/mask arrays; APs unknown to the fingerprint get extra columns."""
    extra: dict = {}
    for scan in scans:
        for a, _ in scan.readings:
            if a not in ap_index and a not in extra:
                extra[a] = len(ap_index) + len(extra)
    width = len(ap_index) + len(extra)
    x = np.zeros((len(scans), width))
    heard = np.zeros((len(scans), width), dtype=bool)
    for i, scan in enumerate(scans):
        for a, s in scan.readings:
            j = ap_index.get(a)
            if j is None:
                j = extra[a]
            x[i, j] = s
            heard[i, j] = True
    return x, heard, len(extra)


def log_likelihood_matrix(scans: Sequence[WifiScan], db: FingerprintDb, config: TrackerConfig) -> np.ndarray:
    """(scans x usable cells) matrix of log P(scan | cell); -inf where a cell shares no AP with the scan."""
    d = db.dense
    n_cells = len(d.cells)
    if n_cells == 0:
        raise EmptyFingerprint("fingerprint has no usable cells")
    x, heard, n_extra = _scan_matrix(scans, d.ap_index)
    present = np.pad(d.present, ((0, 0), (0, n_extra)))
    mu = np.pad(np.nan_to_num(d.means), ((0, 0), (0, n_extra)))
    var = np.pad(np.nan_to_num(d.variances, nan=1.0), ((0, 0), (0, n_extra)), constant_values=1.0)
    gmeans = None
    if config.offset_correction and config.offset_mode is OffsetMode.GLOBAL:
        gmeans = np.pad(_global_means(db), (0, n_extra), constant_values=np.nan)

    out = np.empty((len(scans), n_cells))
    width = x.shape[1]
    chunk = max(1, _CHUNK_ELEMENTS // max(1, n_cells * width))
    for start in range(0, len(scans), chunk):
        xs = x[start:start + chunk, None, :]
        hs = heard[start:start + chunk, None, :]
        shared = hs & present[None]
        q = shared.sum(axis=-1)
        lam = np.zeros(q.shape)
        inflate = np.zeros(q.shape)
        if config.offset_correction:
            use = q > 0
            qq = np.where(use, q, 1)
            if gmeans is None:
                lam = np.where(use, np.where(shared, xs - mu[None], 0.0).sum(-1) / qq, 0.0)
            else:
                ok = hs[:, 0, :] & ~np.isnan(gmeans)[None]
                cnt = ok.sum(-1)
                glam = np.where(ok, x[start:start + chunk] - np.nan_to_num(gmeans)[None], 0.0).sum(-1)
                glam = np.where(cnt > 0, glam / np.maximum(cnt, 1), 0.0)
                lam = np.where(use, glam[:, None], 0.0)
            inflate = np.where(use, np.where(shared, var[None], 0.0).sum(-1) / (qq * qq), 0.0)
        resid = xs - lam[..., None]
        ll_shared = _log_normal(resid, mu[None], var[None] + inflate[..., None])
        ll_missing = _log_normal(resid, MISSING_AP_MEAN, MISSING_AP_VAR)
        ll = np.where(shared, ll_shared, np.where(hs & ~present[None], ll_missing, 0.0)).sum(-1)
        out[start:start + chunk] = np.where(q > 0, ll, -np.inf)
    return out


def posterior_from_log_likelihood(cells: Tuple[CellId, ...], ll: np.ndarray) -> CellPosterior:
    top = float(np.max(ll))
    if not math.isfinite(top):
        raise NoOverlap("scan shares no AP with any usable cell")
    p = np.exp(ll - top)
    z = float(p.sum())
    p = p / z
    finite = int(np.isfinite(ll).sum())
    return CellPosterior(cells, p, top + math.log(z) - math.log(finite))


def discrete_estimate(scan: WifiScan, db: FingerprintDb, config: TrackerConfig = TrackerConfig()):
    """MAP cell and full posterior for one scan (uniform prior over usable cells)."""
    if len(scan) == 0:
        raise InvalidArgument("scan has no readings")
    ll = log_likelihood_matrix([scan], db, config)[0]
    post = posterior_from_log_likelihood(db.dense.cells, ll)
    return post.best, post


def _representatives(db: FingerprintDb, mode: RepresentativeMode) -> np.ndarray:
    d = db.dense
    return d.centers if RepresentativeMode(mode) is RepresentativeMode.GEOMETRIC_CENTER else d.centroids


def spatial_center_of_mass(posterior: CellPosterior, db: FingerprintDb, config: TrackerConfig = TrackerConfig()) -> Point:
    """Probability-weighted mean of the cells' representative locations."""
    d = db.dense
    reps = _representatives(db, config.representative_mode)
    if posterior.cells != d.cells:
        index = {c: i for i, c in enumerate(d.cells)}
        reps = reps[[index[c] for c in posterior.cells]]
    p = posterior.probabilities
    total = float(p.sum())
    return float(p @ reps[:, 0] / total), float(p @ reps[:, 1] / total)


def locate_batch(scans: Sequence[WifiScan], db: FingerprintDb, config: TrackerConfig) -> np.ndarray:
    """Per-scan location before temporal smoothing, shape (S, 2); NaN rows mark scans with no overlap."""
    if not scans:
        return np.zeros((0, 2))
    ll = log_likelihood_matrix(scans, db, config)
    reps = _representatives(db, config.representative_mode)
    top = ll.max(axis=1)
    ok = np.isfinite(top)
    out = np.full((len(scans), 2), np.nan)
    if config.spatial_com:
        p = np.exp(ll[ok] - top[ok, None])
        p /= p.sum(axis=1, keepdims=True)
        out[ok] = p @ reps
    else:
        out[ok] = reps[np.argmax(ll[ok], axis=1)]
    return out


@dataclass
class TrackState:
    """The last ``k`` location estimates of one device."""

    k: int
    history: deque = field(default_factory=deque)

    def __post_init__(self):
        if int(self.k) < 1:
            raise InvalidArgument("k must be >= 1")
        self.history = deque(self.history, maxlen=int(self.k))

    def push(self, estimate: Point, timestamp: Optional[float] = None) -> None:
        self.history.append((float(estimate[0]), float(estimate[1]), timestamp))

    def mean(self) -> Point:
        n = len(self.history)
        return math.fsum(h[0] for h in self.history) / n, math.fsum(h[1] for h in self.history) / n


def temporal_smooth(state: TrackState, new_estimate: Point, k: Optional[int] = None, timestamp=None) -> Point:
    """Push an estimate and return the mean of the last min(k, t) estimates."""
    if k is not None and int(k) != state.k:
        if int(k) < 1:
            raise InvalidArgument("k must be >= 1")
        state.k = int(k)
        state.history = deque(state.history, maxlen=state.k)
    state.push(new_estimate, timestamp)
    return state.mean()


class Tracker:
    """Per-device online tracker: discrete estimate, optional spatial averaging, temporal window."""

    def __init__(self, db: FingerprintDb, config: TrackerConfig = TrackerConfig()):
        if not db.dense.cells:
            raise EmptyFingerprint("fingerprint has no usable cells")
        self.db = db
        self.config = config
        self.state = TrackState(config.window_k)

    def raw_estimate(self, scan: WifiScan) -> Point:
        g, post = discrete_estimate(scan, self.db, self.config)
        if self.config.spatial_com:
            return spatial_center_of_mass(post, self.db, self.config)
        reps = _representatives(self.db, self.config.representative_mode)
        i = self.db.dense.cells.index(g)
        return float(reps[i, 0]), float(reps[i, 1])

    def update(self, scan: WifiScan) -> Optional[Point]:
        """Smoothed estimate, or None (a gap) if the scan matches no cell."""
        try:
            raw = self.raw_estimate(scan)
        except NoOverlap:
            return None
        return temporal_smooth(self.state, raw, timestamp=scan.timestamp)

    def reset(self) -> None:
        self.state = TrackState(self.config.window_k)


def smooth_points(points: np.ndarray, k: int) -> np.ndarray:
    """Apply the temporal window to a sequence of raw estimates; NaN rows stay gaps."""
    state = TrackState(k)
    out = np.full(points.shape, np.nan)
    for i, (x, y) in enumerate(points):
        if np.isnan(x):
            continue
        out[i] = temporal_smooth(state, (x, y))
    return out


def track(scan_stream: Iterable[WifiScan], db: FingerprintDb, config: TrackerConfig = TrackerConfig()) -> List[Optional[Point]]:
    """One smoothed location per scan; ``None`` marks scans that share no AP with the fingerprint."""
    scans = list(scan_stream)
    raw = locate_batch(scans, db, config)
    return [None if np.isnan(p[0]) else (float(p[0]), float(p[1])) for p in smooth_points(raw, config.window_k)]
