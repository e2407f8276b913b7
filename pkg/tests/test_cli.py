import json

import pytest
from fastapi.testclient import TestClient

from hybridloc import cli
from hybridloc.dbfile import load_db
from hybridloc.service import create_app

SMALL = ["--n-training-scans", "200", "--n-test-points", "8", "--scans-per-point", "3"]


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_build_track(tmp_path, capsys):
    train = tmp_path / "train.csv"
    test = tmp_path / "test.csv"
    db = tmp_path / "fp.fpdb"
    assert run(["simulate", "--seed", "3", "--out", str(train)] + SMALL, capsys)[0] == 0
    assert run(["simulate", "--phase", "test", "--seed", "3", "--out", str(test)] + SMALL, capsys)[0] == 0
    code, _, err = run(["build", "--scans", str(train), "--out", str(db), "--min-cell-weight", "0.25"], capsys)
    assert code == 0 and "usable" in err
    assert load_db(db, 0.25).usable_cells()
    code, out, _ = run(["track", "--db", str(db), "--scans", str(test), "--set", "window_k=3"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "timestamp,x,y" and len(lines) == 1 + 8 * 3


def test_experiment_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert run(["experiment", "--seed", "7", "--out", str(path)] + SMALL, capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "param_value,p25,p50,p75,p90,mean,count"


def test_sweep_and_compare(capsys):
    code, out, _ = run(["sweep", "--seed", "1", "--param", "window_k", "--values", "1,4"] + SMALL, capsys)
    assert code == 0 and [l.split(",")[0] for l in out.splitlines()[1:]] == ["1", "4"]
    code, out, _ = run(["compare-baseline", "--seed", "1"] + SMALL, capsys)
    assert code == 0 and out.splitlines()[1].startswith("manual,")


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("n_training_scans = 200\nn_test_points = 8  # small\nscans_per_point = 3\nstrategy = location_only\n")
    code, out, _ = run(["experiment", "--seed", "2", "--config", str(cfg)], capsys)
    assert code == 0 and out.splitlines()[1].startswith("location_only,")


def test_remote_matches_local(monkeypatch, capsys):
    app = create_app()
    monkeypatch.setattr(cli, "_client", lambda api: TestClient(app))
    local = run(["sweep", "--seed", "2", "--param", "cell_size", "--values", "2,3"] + SMALL, capsys)[1]
    remote = run(["sweep", "--seed", "2", "--param", "cell_size", "--values", "2,3", "--api", "http://x"] + SMALL, capsys)[1]
    assert remote == local
    local = run(["experiment", "--seed", "2"] + SMALL, capsys)[1]
    remote = run(["experiment", "--seed", "2", "--api", "http://x"] + SMALL, capsys)[1]
    assert remote == local


def test_remote_error_line(monkeypatch, capsys):
    monkeypatch.setattr(cli, "_client", lambda api: TestClient(create_app()))
    code, _, err = run(["sweep", "--seed", "0", "--param", "colour", "--values", "1", "--api", "http://x"], capsys)
    assert code == cli.EXIT_ERROR
    assert json.loads(err.strip().splitlines()[-1])["error"] == "InvalidArgument"


@pytest.mark.parametrize("argv,kind", [
    (["sweep", "--seed", "0", "--param", "colour", "--values", "1"], "InvalidArgument"),
    (["experiment", "--seed", "0", "--set", "cell_size"], "InvalidArgument"),
    (["experiment", "--seed", "0", "--set", "warp=9"], "InvalidArgument"),
    (["track", "--db", "/nonexistent/fp.fpdb", "--scans", "/nonexistent/s.csv"], "IOError"),
])
def test_error_lines(argv, kind, capsys):
    code, _, err = run(argv, capsys)
    assert code == cli.EXIT_ERROR
    assert json.loads(err.strip().splitlines()[-1])["error"] == kind


def test_bad_db_file(tmp_path, capsys):
    db = tmp_path / "old.fpdb"
    db.write_text("FPDB v99 1 1 1 0 0\nEND 0\n")
    scans = tmp_path / "s.csv"
    scans.write_text("timestamp,ap_id,rss\n0,a,-50\n")
    code, _, err = run(["track", "--db", str(db), "--scans", str(scans)], capsys)
    assert code == cli.EXIT_ERROR and json.loads(err.strip())["error"] == "UnsupportedVersion"


def test_seed_required(capsys):
    with pytest.raises(SystemExit):
        cli.main(["experiment"])
