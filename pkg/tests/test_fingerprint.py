import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridloc.errors import EmptyFingerprint, OutOfArea, UnusableCell
from hybridloc.fingerprint import BuilderConfig, FingerprintBuilder, assign_scan, build_fingerprint, representative_location
from hybridloc.model import (
    AssignmentStrategy as A,
    CellStats,
    GridSpec,
    GroundTruthEstimate,
    RepresentativeMode,
    TaggedScan,
    WifiScan,
)


def tagged(x, y, c, readings, t=0.0):
    return TaggedScan(WifiScan(t, tuple(readings)), GroundTruthEstimate((x, y), c))


def cfg(grid, strategy=A.LOCATION_ONLY, **kw):
    return BuilderConfig(grid=grid, strategy=strategy, **kw)


# -- assignment ---------------------------------------------------------------------

def test_location_only_single_cell(unit_grid):
    # a label inside one cell goes to that cell alone, whatever its confidence
    assert assign_scan(GroundTruthEstimate((0.4, 1.6), 0.9), cfg(unit_grid)) == [((0, 1), 1.0)]


def test_unweighted_two_cells_equal_weight():
    # 2 x 2 block: A=(0,1) top-left, B=(1,1), C=(0,0), D=(1,0); circle straddles A and C only
    grid = GridSpec((0, 0), 1, 2, 2)
    out = assign_scan(GroundTruthEstimate((0.3, 1.0), 0.2), cfg(grid, A.UNWEIGHTED_CONFIDENCE))
    assert sorted(out) == [((0, 0), 1.0), ((0, 1), 1.0)]


def test_weighted_corner(unit_grid):
    out = assign_scan(GroundTruthEstimate((2, 2), 0.5), cfg(unit_grid, A.WEIGHTED_CONFIDENCE))
    assert len(out) == 4 and all(w == pytest.approx(0.25) for _, w in out)


@pytest.mark.parametrize("strategy", list(A))
def test_zero_confidence_is_location_only(unit_grid, strategy):
    assert assign_scan(GroundTruthEstimate((2.5, 0.5), 0.0), cfg(unit_grid, strategy)) == [((2, 0), 1.0)]


def test_assign_out_of_area(unit_grid):
    with pytest.raises(OutOfArea):
        assign_scan(GroundTruthEstimate((5, 1), 0.5), cfg(unit_grid))


# -- ingestion and finalization -------------------------------------------------------

def test_single_scan_stats(unit_grid):
    b = FingerprintBuilder(cfg(unit_grid, min_cell_weight=1.0))
    b.ingest(tagged(0.5, 0.5, 0, [("ap", -50)]))
    raw = b.raw_stats((0, 0), "ap")
    assert (raw.weight_sum, raw.mean) == (1.0, -50.0)
    db = b.finalize()
    st_ = db.cells[(0, 0)].per_ap["ap"]
    assert st_.variance == 1.0  # floor


def test_two_scan_moments(unit_grid):
    b = FingerprintBuilder(cfg(unit_grid, min_cell_weight=1.0))
    b.ingest(tagged(0.5, 0.5, 0, [("ap", -48)]))
    b.ingest(tagged(0.6, 0.5, 0, [("ap", -52)]))
    raw = b.raw_stats((0, 0), "ap")
    assert raw.mean == pytest.approx(-50.0, abs=1e-12)
    assert raw.raw_variance == pytest.approx(4.0, abs=1e-12)
    assert b.finalize().cells[(0, 0)].per_ap["ap"].variance == pytest.approx(4.0, abs=1e-12)


def test_weighted_ingest_quarter_weights(unit_grid):
    b = FingerprintBuilder(cfg(unit_grid, A.WEIGHTED_CONFIDENCE, min_cell_weight=0.0))
    b.ingest(tagged(2, 2, 0.5, [("ap", -50)]))
    for cell in [(1, 1), (2, 1), (1, 2), (2, 2)]:
        raw = b.raw_stats(cell, "ap")
        assert raw.mean == -50.0
        assert raw.weight_sum == pytest.approx(0.25, abs=1e-12)


def test_min_cell_weight_excludes_sparse_cells(unit_grid):
    b = FingerprintBuilder(cfg(unit_grid, A.WEIGHTED_CONFIDENCE, min_cell_weight=1.0))
    # half-weight cell (0,0) from a label on the (0,0)/(1,0) boundary
    b.ingest(tagged(1.0, 0.5, 0.2, [("ap", -60)]))
    b.ingest(tagged(2.5, 2.5, 0, [("ap", -50)]))
    db = b.finalize()
    assert db.cells[(0, 0)].total_weight == pytest.approx(0.5)
    assert not db.cells[(0, 0)].usable
    assert db.cells[(2, 2)].usable
    assert (0, 0) not in db.usable_cells()


def test_empty_fingerprint(unit_grid):
    b = FingerprintBuilder(cfg(unit_grid, min_cell_weight=3.0))
    b.ingest(tagged(0.5, 0.5, 0, [("ap", -50)]))
    with pytest.raises(EmptyFingerprint):
        b.finalize()


def test_out_of_area_and_empty_scans_are_skipped(unit_grid):
    b = FingerprintBuilder(cfg(unit_grid, min_cell_weight=0.0))
    assert not b.ingest(tagged(9, 9, 0, [("ap", -50)]))
    assert not b.ingest(tagged(1, 1, 0, []))
    assert b.ingest(tagged(1, 1, 0, [("ap", -50)]))
    assert (b.skipped, b.ingested) == (2, 1)


def test_representative_location(unit_grid):
    b = FingerprintBuilder(cfg(unit_grid, min_cell_weight=0.0))
    b.ingest(tagged(0.2, 0.2, 0, [("ap", -50)]))
    b.ingest(tagged(0.8, 0.8, 0, [("ap", -50)]))
    db = b.finalize()
    cell = db.cells[(0, 0)]
    assert representative_location(cell, RepresentativeMode.MASS_CENTROID, unit_grid) == pytest.approx((0.5, 0.5))
    assert representative_location(cell, RepresentativeMode.GEOMETRIC_CENTER, unit_grid) == (0.5, 0.5)


def test_weighted_centroid_three_to_one():
    # two labels in the same 2 m cell with weights 3:1 via repetition
    grid = GridSpec((0, 0), 2, 2, 2)
    b = FingerprintBuilder(cfg(grid, min_cell_weight=0.0))
    for _ in range(3):
        b.ingest(tagged(0.0, 0.0, 0, [("ap", -50)]))
    b.ingest(tagged(1.0, 1.0, 0, [("ap", -50)]))
    assert b.finalize().cells[(0, 0)].mass_centroid == pytest.approx((0.25, 0.25))


def test_unusable_cell_has_no_representative(unit_grid):
    cell = CellStats((0, 0), {}, (0.5, 0.5), 0.1, usable=False)
    with pytest.raises(UnusableCell):
        representative_location(cell, RepresentativeMode.GEOMETRIC_CENTER, unit_grid)


# -- properties ------------------------------------------------------------------------

def random_scans(rng, n, grid, max_c=1.5, aps=6):
    out = []
    for i in range(n):
        x = rng.uniform(0, grid.width)
        y = rng.uniform(0, grid.height)
        heard = [a for a in range(aps) if rng.random() < 0.7] or [0]
        out.append(tagged(x, y, rng.uniform(0, max_c), [(f"ap{a}", rng.uniform(-95, -30)) for a in heard], t=i))
    return out


def two_pass(scans, config):
    """Direct weighted mean/variance per (cell, AP) from the full assignment list."""
    acc = {}
    for s in scans:
        for cell, w in assign_scan(s.truth, config):
            for ap, v in s.wifi.readings:
                acc.setdefault((cell, ap), []).append((w, v))
    out = {}
    for key, pairs in acc.items():
        wsum = math.fsum(w for w, _ in pairs)
        mean = math.fsum(w * v for w, v in pairs) / wsum
        var = math.fsum(w * (v - mean) ** 2 for w, v in pairs) / wsum
        out[key] = (wsum, mean, var)
    return out


@pytest.mark.parametrize("strategy", list(A))
def test_incremental_matches_two_pass(strategy):
    grid = GridSpec((0, 0), 1.5, 4, 3)
    config = cfg(grid, strategy, min_cell_weight=0.0)
    scans = random_scans(random.Random(3), 150, grid)
    b = FingerprintBuilder(config).ingest_all(scans)
    for (cell, ap), (wsum, mean, var) in two_pass(scans, config).items():
        raw = b.raw_stats(cell, ap)
        assert raw.weight_sum == pytest.approx(wsum, abs=1e-9)
        assert raw.mean == pytest.approx(mean, abs=1e-9)
        assert raw.raw_variance == pytest.approx(var, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(list(A)))
def test_order_independence(seed, strategy):
    grid = GridSpec((0, 0), 1.0, 4, 4)
    config = cfg(grid, strategy, min_cell_weight=0.0)
    rng = random.Random(seed)
    scans = random_scans(rng, 40, grid)
    shuffled = scans[:]
    rng.shuffle(shuffled)
    a = build_fingerprint(scans, config)
    b = build_fingerprint(shuffled, config)
    assert a.cells.keys() == b.cells.keys()
    for cid in a.cells:
        for ap, sa in a.cells[cid].per_ap.items():
            sb = b.cells[cid].per_ap[ap]
            assert sa.mean == pytest.approx(sb.mean, abs=1e-9)
            assert sa.variance == pytest.approx(sb.variance, abs=1e-9)
            assert sa.weight_sum == pytest.approx(sb.weight_sum, abs=1e-9)


@pytest.mark.parametrize("strategy", list(A))
def test_total_weight_conservation(strategy):
    grid = GridSpec((0, 0), 1.0, 5, 5)
    config = cfg(grid, strategy, min_cell_weight=0.0)
    scans = random_scans(random.Random(11), 80, grid, max_c=2.0)
    scans.append(tagged(8, 8, 1.0, [("ap0", -50)]))  # out of area: contributes nothing
    db = build_fingerprint(scans, config)
    expected = math.fsum(w for s in scans if grid.contains(s.truth.location) for _, w in assign_scan(s.truth, config))
    assert math.fsum(c.total_weight for c in db.cells.values()) == pytest.approx(expected, abs=1e-9)


def test_location_only_matches_site_survey_partition():
    grid = GridSpec((0, 0), 1.0, 3, 3)
    rng = random.Random(5)
    scans = random_scans(rng, 60, grid, max_c=0.0)
    db = build_fingerprint(scans, cfg(grid, min_cell_weight=0.0))
    # oracle: bucket samples by the cell a surveyor standing at the exact point would log
    buckets = {}
    for s in scans:
        x, y = s.truth.location
        cell = (min(int(x), 2), min(int(y), 2))
        for ap, v in s.wifi.readings:
            buckets.setdefault((cell, ap), []).append(v)
    assert {(c, ap) for c, cs in db.cells.items() for ap in cs.per_ap} == set(buckets)
    for (cell, ap), vals in buckets.items():
        st_ = db.cells[cell].per_ap[ap]
        assert st_.weight_sum == len(vals)
        assert st_.mean == pytest.approx(float(np.mean(vals)), abs=1e-9)
        assert st_.variance == pytest.approx(max(float(np.var(vals)), 1.0), abs=1e-9)


def test_shard_merge_equals_single_builder():
    grid = GridSpec((0, 0), 1.0, 4, 4)
    config = cfg(grid, A.WEIGHTED_CONFIDENCE, min_cell_weight=0.0)
    scans = random_scans(random.Random(9), 90, grid)
    whole = FingerprintBuilder(config).ingest_all(scans).finalize()
    left = FingerprintBuilder(config).ingest_all(scans[:40])
    right = FingerprintBuilder(config).ingest_all(scans[40:])
    merged = left.merge(right).finalize()
    assert merged.cells.keys() == whole.cells.keys()
    for cid, cell in whole.cells.items():
        assert merged.cells[cid].total_weight == pytest.approx(cell.total_weight, abs=1e-9)
        assert merged.cells[cid].mass_centroid == pytest.approx(cell.mass_centroid, abs=1e-9)
        for ap, s in cell.per_ap.items():
            m = merged.cells[cid].per_ap[ap]
            assert (m.weight_sum, m.mean, m.variance) == pytest.approx((s.weight_sum, s.mean, s.variance), abs=1e-9)


def test_device_offset_correction_removes_constant_shift():
    grid = GridSpec((0, 0), 1.0, 4, 4)
    rng = random.Random(2)
    base = []
    for i in range(400):
        x, y = rng.uniform(0, 4), rng.uniform(0, 4)
        readings = [(f"ap{a}", -40 - 8 * math.hypot(x - a, y - a) + rng.gauss(0, 1)) for a in range(4)]
        base.append((x, y, readings))
    plain = [TaggedScan(WifiScan(i, tuple(r)), GroundTruthEstimate((x, y), 0), "A") for i, (x, y, r) in enumerate(base)]
    # second device: same positions, 10 dB louder
    mixed = plain[:200] + [
        TaggedScan(WifiScan(i, tuple((a, v + 10) for a, v in r)), GroundTruthEstimate((x, y), 0), "B")
        for i, (x, y, r) in enumerate(base[200:], start=200)
    ]
    config = cfg(grid, device_offset_correction=True, min_cell_weight=0.0)
    b = FingerprintBuilder(config).ingest_all(mixed)
    assert b.device_offset("B") == pytest.approx(10.0, abs=1.5)
    assert abs(b.device_offset("A")) < 1.5
