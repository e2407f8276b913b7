"""HTTP service around the core package.

Crowdsourced tagged scans are posted into named fingerprints; once finalized,
a fingerprint answers single-scan queries and keeps one tracker per device.
Simulated experiments and sweeps are exposed as well so the CLI can run
against a shared server.

Run with ``uvicorn hybridloc.service:app`` or ``hybridloc serve``.
"""

from __future__ import annotations

import threading
from typing import Dict, List, Optional, Tuple, Union

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from . import __version__
from .dbfile import dumps, loads
from .errors import (
    EmptyFingerprint,
    HybridLocError,
    InvalidArgument,
    InvalidCell,
    LoadError,
    NoOverlap,
    NotFinalized,
    OutOfArea,
    UnusableCell,
)
from .estimator import Tracker, discrete_estimate, spatial_center_of_mass
from .fingerprint import BuilderConfig, FingerprintBuilder
from .harness import ErrorReport, TECHNIQUES, compare_baseline, parse_value, reports_csv, run_experiment, run_sweep
from .model import (
    AssignmentStrategy,
    FingerprintDb,
    GridSpec,
    GroundTruthEstimate,
    OffsetMode,
    RepresentativeMode,
    TaggedScan,
    TrackerConfig,
    WifiScan,
)
from .simulator import ExperimentConfig, apply_overrides


# -- wire models ------------------------------------------------------------------

class Reading(BaseModel):
    ap_id: str
    rss: float


class ScanIn(BaseModel):
    timestamp: float = 0.0
    readings: List[Reading]

    def to_scan(self) -> WifiScan:
        return WifiScan(self.timestamp, tuple((r.ap_id, r.rss) for r in self.readings))


class TruthIn(BaseModel):
    x: float
    y: float
    confidence: float = Field(0.0, ge=0)


class TaggedScanIn(BaseModel):
    scan: ScanIn
    truth: TruthIn
    device_id: Optional[str] = None


class GridIn(BaseModel):
    origin_x: float = 0.0
    origin_y: float = 0.0
    cell_size: float = Field(..., gt=0)
    cols: int = Field(..., ge=1)
    rows: int = Field(..., ge=1)


class FingerprintCreate(BaseModel):
    grid: GridIn
    strategy: AssignmentStrategy = AssignmentStrategy.WEIGHTED_CONFIDENCE
    sigma_floor: float = Field(1.0, gt=0)
    min_cell_weight: float = Field(3.0, ge=0)
    device_offset_correction: bool = False


class IngestIn(BaseModel):
    scans: List[TaggedScanIn]


class IngestOut(BaseModel):
    accepted: int
    skipped: int
    ingested_total: int
    skipped_total: int


class FingerprintInfo(BaseModel):
    name: str
    finalized: bool
    cols: int
    rows: int
    cell_size: float
    cells: int
    usable_cells: int
    aps: List[str]
    ingested: Optional[int] = None
    skipped: Optional[int] = None


class TrackerIn(BaseModel):
    window_k: int = Field(10, ge=1)
    offset_correction: bool = False
    representative_mode: RepresentativeMode = RepresentativeMode.MASS_CENTROID
    spatial_com: bool = True
    offset_mode: OffsetMode = OffsetMode.PER_CELL

    def to_config(self) -> TrackerConfig:
        return TrackerConfig(**self.model_dump())


class LocateIn(BaseModel):
    scan: ScanIn
    tracker: TrackerIn = TrackerIn()
    top: int = Field(5, ge=0)


class CellProbability(BaseModel):
    col: int
    row: int
    probability: float


class LocateOut(BaseModel):
    cell: Tuple[int, int]
    location: Tuple[float, float]
    log_evidence: float
    top: List[CellProbability]


class TrackIn(BaseModel):
    scans: List[ScanIn]
    tracker: Optional[TrackerIn] = None


class TrackOut(BaseModel):
    device_id: str
    estimates: List[Optional[Tuple[float, float]]]


ConfigValue = Union[bool, int, float, str]


class ExperimentIn(BaseModel):
    seed: int
    overrides: Dict[str, ConfigValue] = {}


class ReportOut(BaseModel):
    label: str
    p25: float
    p50: float
    p75: float
    p90: float
    mean: float
    count: int


class ReportTable(BaseModel):
    rows: List[ReportOut]
    csv: str


class SweepIn(ExperimentIn):
    parameter: str
    values: List[ConfigValue]
    repeats: int = Field(1, ge=1)


# -- state --------------------------------------------------------------------------

class Registry:
    """Named fingerprints (builders until finalized) and per-device trackers."""

    def __init__(self):
        self.lock = threading.Lock()
        self.builders: Dict[str, FingerprintBuilder] = {}
        self.dbs: Dict[str, FingerprintDb] = {}
        self.trackers: Dict[Tuple[str, str], Tracker] = {}

    def db(self, name: str) -> FingerprintDb:
        try:
            return self.dbs[name]
        except KeyError:
            if name in self.builders:
                raise HTTPException(409, f"fingerprint {name!r} is not finalized") from None
            raise HTTPException(404, f"no fingerprint named {name!r}") from None

    def builder(self, name: str) -> FingerprintBuilder:
        try:
            return self.builders[name]
        except KeyError:
            if name in self.dbs:
                raise HTTPException(409, f"fingerprint {name!r} is finalized and read-only") from None
            raise HTTPException(404, f"no fingerprint named {name!r}") from None


_STATUS = {
    InvalidArgument: 422,
    OutOfArea: 422,
    InvalidCell: 404,
    UnusableCell: 409,
    NotFinalized: 409,
    NoOverlap: 422,
    EmptyFingerprint: 409,
    LoadError: 400,
}


def _status(exc: HybridLocError) -> int:
    for cls in type(exc).__mro__:
        if cls in _STATUS:
            return _STATUS[cls]
    return 400


def _report(label: str, r: ErrorReport) -> ReportOut:
    return ReportOut(label=label, **r.summary())


def _experiment_config(req: ExperimentIn) -> ExperimentConfig:
    overrides = {k: v for k, v in req.overrides.items() if k != "seed"}
    return apply_overrides(ExperimentConfig(seed=req.seed), overrides)


def create_app(registry: Optional[Registry] = None) -> FastAPI:
    app = FastAPI(title="hybridloc", version=__version__)
    reg = registry or Registry()
    app.state.registry = reg

    @app.exception_handler(HybridLocError)
    async def _domain_error(request: Request, exc: HybridLocError):
        return JSONResponse(status_code=_status(exc), content={"error": exc.kind, "message": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    def _info(name: str) -> FingerprintInfo:
        if name in reg.dbs:
            db = reg.dbs[name]
            g = db.grid
            return FingerprintInfo(name=name, finalized=True, cols=g.cols, rows=g.rows, cell_size=g.cell_size,
                                   cells=len(db.cells), usable_cells=len(db.usable_cells()), aps=sorted(db.ap_universe))
        b = reg.builder(name)
        g = b.grid
        return FingerprintInfo(name=name, finalized=False, cols=g.cols, rows=g.rows, cell_size=g.cell_size,
                               cells=0, usable_cells=0, aps=sorted(b.ap_universe),
                               ingested=b.ingested, skipped=b.skipped)

    @app.post("/fingerprints/{name}", response_model=FingerprintInfo, status_code=201)
    def create_fingerprint(name: str, body: FingerprintCreate):
        g = body.grid
        cfg = BuilderConfig(
            grid=GridSpec((g.origin_x, g.origin_y), g.cell_size, g.cols, g.rows),
            strategy=body.strategy,
            sigma_floor=body.sigma_floor,
            min_cell_weight=body.min_cell_weight,
            device_offset_correction=body.device_offset_correction,
        )
        with reg.lock:
            if name in reg.builders or name in reg.dbs:
                raise HTTPException(409, f"fingerprint {name!r} already exists")
            reg.builders[name] = FingerprintBuilder(cfg)
        return _info(name)

    @app.get("/fingerprints/{name}", response_model=FingerprintInfo)
    def get_fingerprint(name: str):
        return _info(name)

    @app.delete("/fingerprints/{name}", status_code=204)
    def delete_fingerprint(name: str):
        with reg.lock:
            found = reg.builders.pop(name, None) or reg.dbs.pop(name, None)
            for key in [k for k in reg.trackers if k[0] == name]:
                del reg.trackers[key]
        if found is None:
            raise HTTPException(404, f"no fingerprint named {name!r}")

    @app.post("/fingerprints/{name}/scans", response_model=IngestOut)
    def ingest(name: str, body: IngestIn):
        tagged = [
            TaggedScan(t.scan.to_scan(), GroundTruthEstimate((t.truth.x, t.truth.y), t.truth.confidence), t.device_id)
            for t in body.scans
        ]
        with reg.lock:
            b = reg.builder(name)
            accepted = sum(1 for t in tagged if b.ingest(t))
        return IngestOut(accepted=accepted, skipped=len(tagged) - accepted,
                         ingested_total=b.ingested, skipped_total=b.skipped)

    @app.post("/fingerprints/{name}/finalize", response_model=FingerprintInfo)
    def finalize(name: str):
        with reg.lock:
            db = reg.builder(name).finalize()
            reg.dbs[name] = db
            del reg.builders[name]
        return _info(name)

    @app.get("/fingerprints/{name}/file", response_class=PlainTextResponse)
    def download(name: str):
        return PlainTextResponse(dumps(reg.db(name)))

    @app.put("/fingerprints/{name}/file", response_model=FingerprintInfo)
    async def upload(name: str, request: Request, min_cell_weight: float = 3.0):
        text = (await request.body()).decode("utf-8")
        db = loads(text, min_cell_weight)
        with reg.lock:
            reg.builders.pop(name, None)
            reg.dbs[name] = db
            for key in [k for k in reg.trackers if k[0] == name]:
                del reg.trackers[key]
        return _info(name)

    @app.post("/fingerprints/{name}/locate", response_model=LocateOut)
    def locate(name: str, body: LocateIn):
        db = reg.db(name)
        cfg = body.tracker.to_config()
        best, post = discrete_estimate(body.scan.to_scan(), db, cfg)
        if cfg.spatial_com:
            loc = spatial_center_of_mass(post, db, cfg)
        else:
            loc = Tracker(db, cfg).raw_estimate(body.scan.to_scan())
        return LocateOut(
            cell=best,
            location=loc,
            log_evidence=post.log_evidence,
            top=[CellProbability(col=c[0], row=c[1], probability=p) for c, p in post.top(body.top)],
        )

    @app.post("/fingerprints/{name}/devices/{device_id}/track", response_model=TrackOut)
    def track_device(name: str, device_id: str, body: TrackIn):
        db = reg.db(name)
        with reg.lock:
            tracker = reg.trackers.get((name, device_id))
            if tracker is None or (body.tracker is not None and tracker.config != body.tracker.to_config()):
                cfg = body.tracker.to_config() if body.tracker else TrackerConfig()
                tracker = reg.trackers[(name, device_id)] = Tracker(db, cfg)
        estimates = [tracker.update(s.to_scan()) for s in body.scans]
        return TrackOut(device_id=device_id, estimates=estimates)

    @app.delete("/fingerprints/{name}/devices/{device_id}", status_code=204)
    def reset_device(name: str, device_id: str):
        with reg.lock:
            if reg.trackers.pop((name, device_id), None) is None:
                raise HTTPException(404, f"no tracker for device {device_id!r}")

    @app.post("/experiments", response_model=ReportTable)
    def experiment(body: ExperimentIn):
        cfg = _experiment_config(body)
        report = run_experiment(cfg)
        label = cfg.strategy.value
        return ReportTable(rows=[_report(label, report)], csv=reports_csv([(label, report)]))

    @app.post("/sweeps", response_model=ReportTable)
    def sweep(body: SweepIn):
        cfg = _experiment_config(body)
        values = [parse_value(body.parameter, str(v)) if isinstance(v, str) else v for v in body.values]
        result = run_sweep(cfg, body.parameter, values, body.repeats)
        rows = [_report(str(v), r) for v, r in zip(body.values, result.reports)]
        return ReportTable(rows=rows, csv=result.to_csv())

    @app.post("/compare-baseline", response_model=ReportTable)
    def compare(body: ExperimentIn):
        reports = compare_baseline(_experiment_config(body))
        rows = [(name, reports[name]) for name in TECHNIQUES]
        return ReportTable(rows=[_report(n, r) for n, r in rows], csv=reports_csv(rows))

    return app


app = create_app()
