"""Simulated evaluation: experiments, parameter sweeps and the manual-survey baseline."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyFingerprint, InvalidArgument
from .estimator import locate_batch, smooth_points
from .fingerprint import BuilderConfig, FingerprintBuilder
from .model import AssignmentStrategy, FingerprintDb, GroundTruthEstimate, RepresentativeMode, TaggedScan
from .simulator import ExperimentConfig, simulate_dataset, training_truths

PERCENTILES = (25, 50, 75, 90)
CSV_HEADER = "param_value,p25,p50,p75,p90,mean,count"


def nearest_rank(sorted_errors: Sequence[float], pct: int) -> float:
    n = len(sorted_errors)
    rank = max(1, -(-pct * n // 100))  # ceil(pct/100 * n) in integer arithmetic
    return sorted_errors[rank - 1]


def error_percentiles(errors: Sequence[float]) -> Dict[int, float]:
    """Nearest-rank p25/p50/p75/p90."""
    if len(errors) == 0:
        raise InvalidArgument("error list is empty")
    ordered = sorted(float(e) for e in errors)
    return {p: nearest_rank(ordered, p) for p in PERCENTILES}


@dataclass(frozen=True)
class ErrorReport:
    errors: Tuple[float, ...]
    p25: float
    p50: float
    p75: float
    p90: float
    mean: float
    count: int

    @classmethod
    def from_errors(cls, errors: Sequence[float]) -> "ErrorReport":
        errs = tuple(float(e) for e in errors)
        pct = error_percentiles(errs)
        return cls(errs, pct[25], pct[50], pct[75], pct[90], math.fsum(errs) / len(errs), len(errs))

    @classmethod
    def pooled(cls, reports: Sequence["ErrorReport"]) -> "ErrorReport":
        return cls.from_errors([e for r in reports for e in r.errors])

    @property
    def median(self) -> float:
        return self.p50

    def csv_row(self, param_value) -> str:
        vals = [self.p25, self.p50, self.p75, self.p90, self.mean]
        return ",".join([str(param_value)] + [repr(float(v)) for v in vals] + [str(self.count)])

    def summary(self) -> dict:
        return {"p25": self.p25, "p50": self.p50, "p75": self.p75, "p90": self.p90, "mean": self.mean, "count": self.count}


def builder_config(config: ExperimentConfig, strategy: Optional[AssignmentStrategy] = None) -> BuilderConfig:
    return BuilderConfig(
        grid=config.grid,
        strategy=strategy or config.strategy,
        sigma_floor=config.sigma_floor,
        min_cell_weight=config.min_cell_weight,
        device_offset_correction=config.device_offset_correction,
    )


def build_db(config: ExperimentConfig) -> FingerprintDb:
    """Simulate the crowdsourced training set and build the fingerprint from it."""
    scans = simulate_dataset(config, "training")
    try:
        return FingerprintBuilder(builder_config(config)).ingest_all(scans).finalize()
    except EmptyFingerprint as exc:
        raise EmptyFingerprint(f"seed {config.seed}, strategy {config.strategy.value}, "
                               f"cell_size {config.cell_size}: {exc}") from None


def build_manual_baseline(config: ExperimentConfig) -> FingerprintDb:
    """Same training walk and scans, but labelled with the exact positions (a perfect site survey)."""
    scans = simulate_dataset(config, "training")
    truths = training_truths(config)
    exact = [TaggedScan(s.wifi, GroundTruthEstimate(p, 0.0), s.device_id) for s, p in zip(scans, truths)]
    cfg = builder_config(config, AssignmentStrategy.LOCATION_ONLY)
    try:
        return FingerprintBuilder(cfg).ingest_all(exact).finalize()
    except EmptyFingerprint as exc:
        raise EmptyFingerprint(f"manual baseline, seed {config.seed}: {exc}") from None


def evaluate(db: FingerprintDb, config: ExperimentConfig) -> ErrorReport:
    """Track every test segment (one per test point) and measure the Euclidean error per scan.

    Scans that overlap no cell produce no estimate; they are scored against the
    last smoothed estimate of their segment, or the area centre if there is none.
    """
    test = simulate_dataset(config, "test")
    truth = np.array([p for p, _ in test])
    raw = locate_batch([s for _, s in test], db, config.tracker)
    fallback = (config.environment.width / 2, config.environment.height / 2)
    errors = np.empty(len(test))
    start = 0
    while start < len(test):
        end = start
        while end < len(test) and (truth[end] == truth[start]).all():
            end += 1
        smoothed = smooth_points(raw[start:end], config.tracker.window_k)
        last = fallback
        for i in range(start, end):
            est = smoothed[i - start]
            if not np.isnan(est[0]):
                last = (est[0], est[1])
            errors[i] = math.hypot(last[0] - truth[i, 0], last[1] - truth[i, 1])
        start = end
    return ErrorReport.from_errors(errors)


def run_experiment(config: ExperimentConfig) -> ErrorReport:
    return evaluate(build_db(config), config)


def run_baseline(config: ExperimentConfig) -> ErrorReport:
    return evaluate(build_manual_baseline(config), config)


SWEEP_PARAMETERS = (
    "cell_size", "n_training", "window_k", "strategy", "loc_noise_sigma", "device_offset", "representative_mode",
    "offset_correction",
)


def with_parameter(config: ExperimentConfig, parameter: str, value) -> ExperimentConfig:
    """Copy of ``config`` with one sweepable parameter changed."""
    if parameter == "cell_size":
        return replace(config, cell_size=float(value))
    if parameter == "n_training":
        return replace(config, n_training_scans=int(value))
    if parameter == "window_k":
        return replace(config, tracker=replace(config.tracker, window_k=int(value)))
    if parameter == "strategy":
        return replace(config, strategy=AssignmentStrategy(value))
    if parameter == "loc_noise_sigma":
        return replace(config, oracle=replace(config.oracle, loc_noise_sigma=float(value)))
    if parameter == "device_offset":
        return replace(config, test_device=replace(config.test_device, rss_offset=float(value)))
    if parameter == "representative_mode":
        return replace(config, tracker=replace(config.tracker, representative_mode=RepresentativeMode(value)))
    if parameter == "offset_correction":
        flag = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "on", "yes")
        return replace(config, tracker=replace(config.tracker, offset_correction=flag))
    raise InvalidArgument(f"unknown sweep parameter {parameter!r}; expected one of {', '.join(SWEEP_PARAMETERS)}")


def parse_value(parameter: str, text: str):
    if parameter in ("cell_size", "loc_noise_sigma", "device_offset"):
        return float(text)
    if parameter in ("n_training", "window_k"):
        return int(text)
    return text


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: Tuple
    reports: Tuple[ErrorReport, ...]

    def medians(self) -> List[float]:
        return [r.p50 for r in self.reports]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(CSV_HEADER + "\n")
        for v, r in zip(self.values, self.reports):
            out.write(r.csv_row(_label(v)) + "\n")
        return out.getvalue()


def _label(value) -> str:
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def seed_schedule(base_seed: int, repeats: int) -> List[int]:
    return [int(base_seed) + i for i in range(int(repeats))]


def run_sweep(base_config: ExperimentConfig, parameter: str, values: Sequence, repeats: int = 1) -> Sweep:
    """One experiment per value; every value runs the same seeds base, base+1, ..., pooled per value."""
    if parameter not in SWEEP_PARAMETERS:
        raise InvalidArgument(f"unknown sweep parameter {parameter!r}; expected one of {', '.join(SWEEP_PARAMETERS)}")
    if int(repeats) < 1:
        raise InvalidArgument("repeats must be >= 1")
    if not values:
        raise InvalidArgument("sweep needs at least one value")
    seeds = seed_schedule(base_config.seed, repeats)
    reports = []
    for value in values:
        cfg = with_parameter(base_config, parameter, value)
        reports.append(ErrorReport.pooled([run_experiment(cfg.with_seed(s)) for s in seeds]))
    return Sweep(parameter, tuple(values), tuple(reports))


TECHNIQUES = ("manual", "weighted_confidence", "unweighted_confidence", "location_only")


def compare_baseline(config: ExperimentConfig) -> Dict[str, ErrorReport]:
    """Manual survey versus the three crowdsourced assignment strategies on one seed."""
    out = {"manual": run_baseline(config)}
    for name in TECHNIQUES[1:]:
        out[name] = run_experiment(replace(config, strategy=AssignmentStrategy(name)))
    return out


def reports_csv(rows: Sequence[Tuple[str, ErrorReport]]) -> str:
    return CSV_HEADER + "\n" + "".join(r.csv_row(label) + "\n" for label, r in rows)
