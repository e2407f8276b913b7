import math
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridloc.errors import InvalidArgument
from hybridloc.fingerprint import build_fingerprint
from hybridloc.harness import (
    CSV_HEADER,
    ErrorReport,
    TECHNIQUES,
    build_db,
    build_manual_baseline,
    builder_config,
    compare_baseline,
    error_percentiles,
    evaluate,
    parse_value,
    reports_csv,
    run_experiment,
    run_sweep,
    seed_schedule,
    with_parameter,
)
from hybridloc.model import AssignmentStrategy, GroundTruthEstimate, TaggedScan
from hybridloc.simulator import BleOracleParams, ExperimentConfig, PathLoss, apply_overrides, simulate_dataset

SMALL = ExperimentConfig(n_training_scans=300, n_test_points=20, scans_per_point=5)


def test_percentile_examples():
    assert error_percentiles([1, 2, 3, 4])[50] == 2
    assert error_percentiles([5]) == {25: 5, 50: 5, 75: 5, 90: 5}
    assert error_percentiles(list(range(1, 101)))[90] == 90
    assert error_percentiles([4, 1, 3, 2])[25] == 1


def test_percentiles_empty():
    with pytest.raises(InvalidArgument):
        error_percentiles([])


@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=200))
def test_percentiles_are_order_statistics(errors):
    ordered = sorted(errors)
    pct = error_percentiles(errors)
    for p, v in pct.items():
        rank = math.ceil(p * len(errors) / 100)
        assert v == ordered[rank - 1]
    assert pct[25] <= pct[50] <= pct[75] <= pct[90]


def test_report_csv_row():
    r = ErrorReport.from_errors([1.0, 2.0, 3.0, 4.0])
    assert r.csv_row("x") == "x,1.0,2.0,3.0,4.0,2.5,4"
    assert reports_csv([("a", r)]).splitlines() == [CSV_HEADER, "a,1.0,2.0,3.0,4.0,2.5,4"]


def test_run_experiment_is_deterministic():
    a = run_experiment(SMALL.with_seed(2))
    b = run_experiment(SMALL.with_seed(2))
    assert a == b
    assert a.count == SMALL.n_test_scans


def test_zero_noise_quantization_bound():
    # no shadowing, no label noise, 1 m cells: each stationary estimate is at most half a diagonal away
    cfg = replace(
        SMALL,
        cell_size=1.0,
        n_training_scans=4000,
        oracle=BleOracleParams(loc_noise_sigma=0.0, min_confidence=0.0),
        environment=replace(SMALL.environment, pathloss=PathLoss(shadowing_sigma=0.0)),
        strategy=AssignmentStrategy.LOCATION_ONLY,
        min_cell_weight=1.0,
    )
    cfg = apply_overrides(cfg, {"spatial_com": "off", "representative_mode": "geometric_center"})
    report = run_experiment(cfg)
    assert report.median <= cfg.cell_size / math.sqrt(2) + 1e-9


def test_manual_baseline_equals_crowdsourced_without_noise():
    cfg = replace(SMALL, oracle=BleOracleParams(loc_noise_sigma=0.0, min_confidence=0.0),
                  strategy=AssignmentStrategy.LOCATION_ONLY)
    assert build_manual_baseline(cfg).cells == build_db(cfg).cells


def test_manual_baseline_uses_exact_labels():
    cfg = SMALL
    db = build_manual_baseline(cfg)
    assert db.usable_cells()
    for cell in db.cells.values():
        x0, y0, x1, y1 = cfg.grid.cell_bounds(cell.cell_id)
        cx, cy = cell.mass_centroid
        assert x0 <= cx <= x1 and y0 <= cy <= y1
        assert all(s.variance >= cfg.sigma_floor for s in cell.per_ap.values())


def test_evaluate_uses_fallback_for_gaps():
    cfg = SMALL
    scans = [TaggedScan(s.wifi, GroundTruthEstimate(s.truth.location, 0.0)) for s in simulate_dataset(cfg, "training")]
    # a fingerprint that only knows an AP the test scans never hear
    only = [TaggedScan(replace(s.wifi, readings=(("ghost", -50.0),)), s.truth) for s in scans]
    db = build_fingerprint(only, replace(builder_config(cfg), min_cell_weight=0.0))
    report = evaluate(db, cfg)
    centre = (cfg.environment.width / 2, cfg.environment.height / 2)
    expected = sorted(math.dist(p, centre) for p, _ in simulate_dataset(cfg, "test"))
    assert list(sorted(report.errors)) == pytest.approx(expected)


def test_sweep_shares_seed_schedule():
    sweep = run_sweep(SMALL.with_seed(5), "window_k", [1, 3], repeats=2)
    assert seed_schedule(5, 2) == [5, 6]
    expected = ErrorReport.pooled([run_experiment(with_parameter(SMALL, "window_k", 3).with_seed(s)) for s in (5, 6)])
    assert sweep.reports[1] == expected
    lines = sweep.to_csv().splitlines()
    assert lines[0] == CSV_HEADER and lines[1].startswith("1,") and lines[2].startswith("3,")


def test_sweep_errors():
    with pytest.raises(InvalidArgument):
        run_sweep(SMALL, "colour", [1])
    with pytest.raises(InvalidArgument):
        run_sweep(SMALL, "window_k", [])
    with pytest.raises(InvalidArgument):
        run_sweep(SMALL, "window_k", [1], repeats=0)


@pytest.mark.parametrize("param,text,check", [
    ("cell_size", "3", lambda c: c.cell_size == 3.0),
    ("n_training", "250", lambda c: c.n_training_scans == 250),
    ("window_k", "4", lambda c: c.tracker.window_k == 4),
    ("strategy", "location_only", lambda c: c.strategy is AssignmentStrategy.LOCATION_ONLY),
    ("loc_noise_sigma", "3.5", lambda c: c.oracle.loc_noise_sigma == 3.5),
    ("device_offset", "8", lambda c: c.test_device.rss_offset == 8.0),
    ("representative_mode", "geometric_center", lambda c: c.tracker.representative_mode.value == "geometric_center"),
    ("offset_correction", "on", lambda c: c.tracker.offset_correction),
])
def test_with_parameter(param, text, check):
    assert check(with_parameter(SMALL, param, parse_value(param, text)))


def test_compare_baseline_rows():
    out = compare_baseline(SMALL)
    assert tuple(out) == TECHNIQUES
    assert all(r.count == SMALL.n_test_scans for r in out.values())
