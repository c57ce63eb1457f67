import json
import pathlib

import numpy as np
import pytest

import multimed

DATA = pathlib.Path(__file__).resolve().parents[2] / "data"


def test_simulate_columns_and_determinism():
    cols, csv, spec = multimed.simulate(str(DATA / "independent.dag"), 200, 7)
    assert list(cols) == ["L1", "L2", "A", "M1", "M2", "Y"]
    assert cols["A"].shape == (200,)
    assert set(np.unique(cols["M1"])) <= {0.0, 1.0}
    again = multimed.simulate(str(DATA / "independent.dag"), 200, 7)
    assert again[1] == csv
    assert again[2] == spec


def test_simulate_rejects_empty_sample():
    with pytest.raises(multimed.InputError, match="n must be"):
        multimed.simulate(str(DATA / "independent.dag"), 0, 7)


def test_check_dag():
    ok = multimed.check_dag(str(DATA / "dependent.dag"))
    assert len(ok) == 3
    assert all(r["mediator_condition"]["holds"] for r in ok)
    bad = multimed.check_dag(str(DATA / "independent_latent.dag"))
    assert not bad[0]["mediator_condition"]["holds"]
    assert "L1" in bad[0]["mediator_condition"]["witness"]
    with pytest.raises(ValueError):
        multimed.check_dag("node A exposure\nnode B banana\n")


def test_analyze_report(tmp_path):
    _, csv, spec = multimed.simulate(str(DATA / "independent.dag"), 500, 3)
    (tmp_path / "data.csv").write_text(csv)
    (tmp_path / "truth.scm").write_text(spec)
    report = multimed.analyze(DATA / "independent.dag", tmp_path / "data.csv", seed=1, bootstrap=100,
                              spec_path=tmp_path / "truth.scm", n_mc=20000)
    assert list(report) == ["config", "ignorability", "selection", "effects", "average", "diagnostics"]
    te = {e["mediator"]: e["estimate"] for e in report["effects"] if e["effect"] == "TE"}
    cde = {e["mediator"]: e["estimate"] for e in report["effects"] if e["effect"] == "CDE"}
    scie = {e["mediator"]: e["estimate"] for e in report["effects"] if e["effect"] == "sCIE"}
    for k in te:
        assert abs(te[k] - cde[k] - scie[k]) <= 1e-12
    assert all("oracle" in e for e in report["effects"])
    again = multimed.analyze(DATA / "independent.dag", tmp_path / "data.csv", seed=1, bootstrap=100, threads=2,
                             spec_path=tmp_path / "truth.scm", n_mc=20000)
    again["diagnostics"].pop("timestamp")
    report["diagnostics"].pop("timestamp")
    assert json.dumps(again) == json.dumps(report)


def test_unidentified_analysis_raises(tmp_path):
    _, csv, _ = multimed.simulate(str(DATA / "independent.dag"), 300, 3)
    (tmp_path / "data.csv").write_text(csv)
    with pytest.raises(multimed.AnalysisError):
        multimed.analyze(DATA / "independent_latent.dag", tmp_path / "data.csv", seed=1, bootstrap=0)


def test_oracle_from_spec():
    _, _, spec = multimed.simulate(str(DATA / "independent.dag"), 10, 5)
    truth = multimed.oracle(spec, n_mc=20000, seed=1)
    assert len(truth["mediators"]) == 2
