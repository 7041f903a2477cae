import csv
import json

import pytest

from trustcbf.cli import main

SMALL = {
    "geometry": {"preset": "single-merge", "length": 60.0},
    "arrivals": {"rate_vph": 900.0, "count": 4, "seed": 0},
    "sim": {"dt": 0.02, "t_max": 20.0, "record": True},
}


@pytest.fixture
def scenario(tmp_path, monkeypatch):
    monkeypatch.setenv("TRUSTCBF_OUT", str(tmp_path / "runs"))
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


def test_run_writes_outputs(scenario, tmp_path):
    assert main(["run", str(scenario), "--seed", "7"]) == 0
    out = tmp_path / "runs" / "small-seed7"
    for name in ("trace.csv", "events.log", "summary.json", "run_meta.json"):
        assert (out / name).exists()
    assert json.loads((out / "summary.json").read_text())["violations"] == 0
    # a second run gets its own directory unless forced
    assert main(["run", str(scenario), "--seed", "7"]) == 0
    assert (tmp_path / "runs" / "small-seed7-1").exists()
    body = (out / "trace.csv").read_text()
    assert main(["run", str(scenario), "--seed", "7", "--force"]) == 0
    assert (out / "trace.csv").read_text() == body


def test_sweep_grid(scenario, tmp_path):
    out = tmp_path / "sw"
    rc = main(["sweep", "--fake-fraction", "0,0.25,0.5", "--repeats", "5",
               "--scenario", str(scenario), "--out", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert len(rows) == 15
    assert sorted({r["fakes"] for r in rows}) == ["0", "1", "2"]
    agg = list(csv.DictReader(open(out / "sweep_aggregate.csv")))
    assert [a["runs"] for a in agg] == ["5", "5", "5"]


def test_verify_exit_codes():
    assert main(["verify", "determinism"]) == 0
    assert main(["verify", "no-such-suite"]) == 2


def test_bad_scenario(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"control": {"v_max": -1.0}}))
    assert main(["run", str(p), "--out", str(tmp_path / "x")]) == 2
    assert "invalid scenario" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    assert main(["sweep", "--fake-fraction", "2"]) == 2


def test_plotdata(scenario, tmp_path):
    assert main(["run", str(scenario), "--out", str(tmp_path / "r")]) == 0
    dest = tmp_path / "tidy.csv"
    assert main(["plotdata", str(tmp_path / "r" / "trace.csv"), "--out", str(dest), "--every", "5"]) == 0
    rows = list(csv.DictReader(open(dest)))
    assert {r["series"] for r in rows} == {"barrier", "trust", "queue"}
    q = [r for r in rows if r["series"] == "queue"]
    assert all(float(r["t_end"]) >= float(r["t"]) for r in q)
