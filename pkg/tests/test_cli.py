import csv
import json

import numpy as np
import pytest

from auctiondiscounts.cli import main
from auctiondiscounts.distributions import TruncatedLogNormal

UNIFORM = {"kind": "uniform", "lo": 0.0, "hi": 1.0}


def _config(tmp_path, name="cfg.json", **solver):
    doc = {"solver": {"dist1": UNIFORM, "dist2": UNIFORM, "n": 4, "steps": 1000, **solver}}
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_solve_symmetric(tmp_path, capsys):
    out = tmp_path / "tables.csv"
    assert main(["solve", "--config", _config(tmp_path), "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["role", "valuation", "bid"]
    v = np.array([float(r[1]) for r in rows[1:]])
    b = np.array([float(r[2]) for r in rows[1:]])
    upper = v > 0.05
    assert np.allclose(b[upper], 0.8 * v[upper], atol=1e-6)
    report = json.loads((tmp_path / "tables.report.json").read_text())
    assert report["b_star"] == pytest.approx(0.8, abs=1e-4)
    assert report["config"]["steps"] == 1000
    assert "b_star" in capsys.readouterr().out


def test_solve_steps_flag_overrides_config(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["solve", "--config", _config(tmp_path), "--out", str(out), "--steps", "500", "--no-audit"]) == 0
    report = json.loads((tmp_path / "t.report.json").read_text())
    assert report["config"]["steps"] == 500
    assert len(report["tables"]["undiscounted"]["bid"]) <= 501


def test_solve_infeasible_bracket(tmp_path, capsys):
    cfg = _config(tmp_path, bstar_bracket=[0.1, 0.2])
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 3
    err = capsys.readouterr().err
    assert "bstar_bracket" in err


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"solver": {"dist1": UNIFORM, "dist2": UNIFORM, "tolerance": 1}}))
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "x.csv")]) == 2
    assert "tolerance" in capsys.readouterr().err
    path.write_text(json.dumps({"solver": {"dist1": UNIFORM, "dist2": UNIFORM}, "plots": True}))
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "x.csv")]) == 2


def test_bad_rate_flag(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["solve", "--config", _config(tmp_path), "--out", "x.csv", "--rate", "1.0"])
    assert info.value.code == 2


def test_outcomes_sweep_and_determinism(tmp_path):
    cfg = _config(tmp_path, steps=500)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["outcomes", "--config", cfg, "--sweep", "0,0.1", "--out", str(a)]) == 0
    assert main(["outcomes", "--config", cfg, "--sweep", "0,0.1", "--out", str(b)]) == 0
    rows = _rows(a)
    assert rows[0][:3] == ["r", "e_rev", "eff"]
    assert len(rows) == 3
    assert a.read_bytes() == b.read_bytes()


def test_outcomes_single_rate_round3(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["outcomes", "--config", _config(tmp_path, steps=500), "--sweep", "0",
                 "--out", str(out), "--round3", "--conditional"]) == 0
    rows = _rows(out)
    assert len(rows) == 2
    assert rows[1][0] == "0.00" and rows[1][3] == "0.200"
    assert len(rows[0]) == 13


def test_outcomes_failed_row(tmp_path, capsys):
    cfg = _config(tmp_path, steps=500, bstar_bracket=[0.1, 0.2])
    out = tmp_path / "o.csv"
    assert main(["outcomes", "--config", cfg, "--sweep", "0.05", "--out", str(out)]) == 0
    assert "flagged" in capsys.readouterr().err
    assert _rows(out)[1][1] == "nan"


def test_outcomes_rejects_bad_sweep(tmp_path):
    assert main(["outcomes", "--config", _config(tmp_path), "--sweep", "0,1.5"]) == 2


def test_verify_default_passes_and_replays(tmp_path, capsys):
    assert main(["verify", "--theorem", "additive", "--seed", "4"]) == 0
    first = capsys.readouterr().out
    assert main(["verify", "--theorem", "additive", "--seed", "4"]) == 0
    assert capsys.readouterr().out == first
    assert "trials: 100000" in first and "status: PASS" in first
    assert main(["verify", "--theorem", "multiplicative", "--trials", "5000"]) == 0


def test_verify_zero_trials():
    assert main(["verify", "--theorem", "multiplicative", "--trials", "0"]) == 2


def test_verify_equal_rate(tmp_path, capsys):
    out = tmp_path / "eq.txt"
    code = main(["verify", "--theorem", "equal-rate", "--steps", "500", "--rates", "0,0.1,0.2",
                 "--out", str(out)])
    assert code == 0
    assert out.read_text().rstrip().endswith("status: PASS")


def _solve_report(tmp_path, name, r, dist=UNIFORM):
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps({"solver": {"dist1": dist, "dist2": dist, "steps": 1000, "r": r}}))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / f"{name}.csv"), "--no-audit"]) == 0
    return str(tmp_path / f"{name}.report.json")


def _curves(path):
    curves = {}
    for role, r, v, b in _rows(path)[1:]:
        curves.setdefault((role, float(r)), []).append((float(v), float(b)))
    return {k: np.array(x) for k, x in curves.items()}


def test_plotdata_discounted_curve_above(tmp_path):
    rep = _solve_report(tmp_path, "r25", 0.25)
    out = tmp_path / "plot.csv"
    assert main(["plotdata", "--solve", rep, "--out", str(out)]) == 0
    assert _rows(out)[0] == ["role", "r", "valuation", "bid"]
    curves = _curves(out)
    d, o = curves[("discounted", 0.25)], curves[("undiscounted", 0.25)]
    v = np.linspace(0.05, 0.95, 50)
    assert np.all(np.interp(v, d[:, 0], d[:, 1]) > np.interp(v, o[:, 0], o[:, 1]))


def test_plotdata_symmetric_curves_coincide(tmp_path):
    dist = TruncatedLogNormal(0.4, 3.0).to_dict()
    rep0 = _solve_report(tmp_path, "r0", 0.0, dist)
    rep1 = _solve_report(tmp_path, "r1", 0.1)
    out = tmp_path / "plot.csv"
    assert main(["plotdata", "--solve", rep0, "--solve", rep1, "--out", str(out)]) == 0
    curves = _curves(out)
    assert set(curves) == {("discounted", 0.0), ("undiscounted", 0.0), ("discounted", 0.1), ("undiscounted", 0.1)}
    d, o = curves[("discounted", 0.0)], curves[("undiscounted", 0.0)]
    v = np.linspace(d[0, 0], d[-1, 0], 500)
    gap = np.abs(np.interp(v, d[:, 0], d[:, 1]) - np.interp(v, o[:, 0], o[:, 1]))
    assert gap.max() <= 1e-9 * d[-1, 1]


def test_plotdata_empty_report(tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert main(["plotdata", "--solve", str(empty)]) == 2
    empty.write_text("{}")
    assert main(["plotdata", "--solve", str(empty)]) == 2


@pytest.fixture(scope="module")
def bid_file(tmp_path_factory):
    rng = np.random.default_rng(12)
    path = tmp_path_factory.mktemp("bids") / "bids.csv"
    d = TruncatedLogNormal(0.4, 3.0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["auction_id", "bidder_class", "bid"])
        for i in range(3000):
            vals = d.sample(rng, 5)
            w.writerow([f"a{i}", "discounted", repr(float(0.8 * vals[0] / 0.95))])
            for v in vals[1:]:
                w.writerow([f"a{i}", "other", repr(float(0.8 * v))])
        w.writerow(["a-bad", "other", "-2"])
    return str(path)


def test_estimate(tmp_path, bid_file, capsys):
    out = tmp_path / "est.json"
    pv = tmp_path / "pv.csv"
    assert main(["estimate", "--bids", bid_file, "--rate", "0.05", "--out", str(out),
                 "--pseudo-values", str(pv)]) == 0
    summary = json.loads(out.read_text())
    assert summary["row_errors"] == 1
    assert [c["class"] for c in summary["classes"]] == ["discounted", "other"]
    for c in summary["classes"]:
        assert {"sigma", "m", "sample_count", "trimmed_count"} <= set(c)
    assert _rows(pv)[0] == ["bidder_class", "bid", "pseudo_value"]
    assert json.loads(capsys.readouterr().out) == summary


def test_estimate_missing_header(tmp_path, capsys):
    path = tmp_path / "nohdr.csv"
    path.write_text("a1,other,2.5\n")
    assert main(["estimate", "--bids", str(path), "--rate", "0.05"]) == 2
    assert "auction_id,bidder_class,bid" in capsys.readouterr().err


def test_estimate_bad_rate(bid_file):
    with pytest.raises(SystemExit) as info:
        main(["estimate", "--bids", bid_file, "--rate", "1.2"])
    assert info.value.code == 2
