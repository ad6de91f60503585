import json

import numpy as np
import pytest

from alrscan.cli import main
from alrscan.data import PointDataset, write_point_csv

from conftest import random_points


@pytest.fixture
def csv_path(tmp_path):
    data = random_points(40, J=250, p=0.15, covariates=1)
    data = PointDataset(data.locations, data.cases, data.covariates, covariate_names=("age",))
    path = tmp_path / "d.csv"
    write_point_csv(data, path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


GRID = "grid:w=20,s=10,o=5,min=2"


def test_analyze_report(capsys, csv_path):
    code, out, _ = run(capsys, "analyze", "--data", csv_path, "--windows", GRID, "--stat", "alr",
                       "--alt", "one", "--pvalue", "chi2", "--pvalue", "gdist", "--pvalue", "perm:L=99")
    assert code == 0
    rep = json.loads(out)
    assert rep["schema"] == 1 and rep["data"]["J"] == 250
    assert [p["method"] for p in rep["pvalues"]] == ["chi2", "gdist", "mc_perm"]
    assert all(0 < p["p"] <= 1 for p in rep["pvalues"])
    assert rep["statistic"]["kind"] == "alr" and rep["statistic"]["k"] == 1
    assert "timing_seconds" not in rep


def test_scan_report_has_window_provenance(capsys, csv_path, tmp_path):
    dump = tmp_path / "w.tsv"
    code, out, _ = run(capsys, "analyze", "--data", csv_path, "--windows", "knn:jmax=8", "--stat", "scan",
                       "--pvalue", "perm:L=49", "--dump-windows", dump)
    assert code == 0
    win = json.loads(out)["statistic"]["argmax_window"]
    assert {"n_B", "m_B", "center", "radius"} <= set(win)
    assert dump.read_text().startswith("window\t")


def test_reports_identical_across_threads(capsys, csv_path):
    args = ["analyze", "--data", csv_path, "--windows", GRID, "--pvalue", "perm:L=1500", "--seed", 7]
    outs = [run(capsys, *args, "--threads", t)[1] for t in (1, 2, 4)]
    assert outs[0] == outs[1] == outs[2]


def test_covariate_paths(capsys, csv_path):
    for mode in ("on", "quadratic"):
        code, out, _ = run(capsys, "analyze", "--data", csv_path, "--windows", GRID, "--covariates", mode,
                           "--pvalue", "chi2", "--pvalue", "risk:L=99", "--standardize")
        assert code == 0
        rep = json.loads(out)
        assert rep["covariates"] == mode and rep["standardize"] is True
        assert [p["method"] for p in rep["pvalues"]] == ["chi2", "mc_risk"]


def test_out_file_and_timing(capsys, csv_path, tmp_path):
    out = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "analyze", "--data", csv_path, "--windows", GRID, "--out", out, "--timing")
    assert code == 0 and stdout == ""
    assert "timing_seconds" in json.loads(out.read_text())


def test_weights_must_be_normalized(capsys, csv_path, tmp_path):
    code, out, _ = run(capsys, "analyze", "--data", csv_path, "--windows", GRID)
    N = json.loads(out)["windows"]["N"]
    wfile = tmp_path / "w.txt"
    wfile.write_text("\n".join([repr(0.9 / N)] * N))
    code, _, err = run(capsys, "analyze", "--data", csv_path, "--windows", GRID, "--stat", f"walr:weights={wfile}")
    assert code == 2 and "normalized" in err
    wfile.write_text("\n".join([repr(1.0 / N)] * (N - 1) + [repr(1.0 - (N - 1) * (1.0 / N))]))
    code, out, _ = run(capsys, "analyze", "--data", csv_path, "--windows", GRID, "--stat", f"walr:weights={wfile}")
    assert code == 0 and json.loads(out)["statistic"]["kind"] == "weighted_alr"


@pytest.mark.parametrize("extra,needle", [
    (["--pvalue", "risk"], "covariate"),
    (["--stat", "scan", "--pvalue", "chi2"], "--stat scan"),
    (["--pvalue", "chi2", "--pvalue", "chi2"], "more than once"),
    (["--pvalue", "perm:L=0"], "L must"),
    (["--pvalue", "boot"], "unknown method"),
    (["--stat", "median"], "unknown statistic"),
])
def test_flag_validation(capsys, csv_path, extra, needle):
    code, _, err = run(capsys, "analyze", "--data", csv_path, "--windows", GRID, *extra)
    assert code == 2 and needle in err


@pytest.mark.parametrize("spec,needle", [
    ("hex:r=3", "unknown window family"),
    ("grid:s=10", "missing w="),
    ("knn:jmax=5,colour=red", "unknown option"),
    ("knn:jmax=x", "bad value"),
])
def test_window_spec_errors(capsys, csv_path, spec, needle):
    code, _, err = run(capsys, "analyze", "--data", csv_path, "--windows", spec)
    assert code == 2 and needle in err


def test_bad_data_row_named(capsys, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,x,y,case\n1,0,0,1\n2,1,1,3\n")
    code, _, err = run(capsys, "analyze", "--data", p, "--windows", "knn:jmax=1")
    assert code == 2 and "line 3" in err


def test_explicit_sets_file(capsys, csv_path, tmp_path):
    sets = tmp_path / "sets.txt"
    sets.write_text("# windows\n0 1 2\n3,4\n")
    code, out, _ = run(capsys, "analyze", "--data", csv_path, "--windows", f"sets:{sets}")
    assert code == 0 and json.loads(out)["windows"]["N"] == 2


def test_aggregated_input(capsys, tmp_path):
    p = tmp_path / "agg.csv"
    g = np.random.default_rng(0)
    rows = ["id,x,y,cases,population"] + [f"{j},{g.random():.4f},{g.random():.4f},{g.integers(0, 5)},20" for j in range(30)]
    p.write_text("\n".join(rows) + "\n")
    code, out, _ = run(capsys, "analyze", "--data", p, "--windows", "allpairs:wmax=0.2", "--pvalue", "gdist")
    rep = json.loads(out)
    assert code == 0 and rep["data"]["format"] == "aggregated" and rep["data"]["J"] == 600


def test_simulate_qq(capsys, tmp_path):
    cfg = tmp_path / "qq.json"
    cfg.write_text(json.dumps({"mode": "gaussian", "n": 10, "max_radius": 0.2, "L": 10000}))
    code, _, _ = run(capsys, "simulate", "--experiment", "qq", "--config", cfg, "--seed", 3, "--out", tmp_path / "o")
    assert code == 0
    assert len((tmp_path / "o" / "qq.tsv").read_text().splitlines()) == 10001
    assert json.loads((tmp_path / "o" / "qq.json").read_text())["config"]["seed"] == 3


def test_simulate_example1_table(capsys, tmp_path):
    cfg = tmp_path / "e1.json"
    cfg.write_text(json.dumps({"replicates": 4, "mc_L": 19, "block_size": 150}))
    code, _, _ = run(capsys, "simulate", "--experiment", "example1", "--config", cfg, "--out", tmp_path)
    lines = (tmp_path / "example1.tsv").read_text().splitlines()
    assert code == 0 and len(lines) == 5
    assert lines[0].split("\t") == ["theta", "mc_0.05", "alr_0.05", "mc_0.01", "alr_0.01"]


def test_simulate_errors(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--experiment", "example9")
    assert code == 2 and "unknown experiment" in err
    code, _, err = run(capsys, "simulate", "--experiment", "power", "--out", tmp_path)
    assert code == 2 and "data" in err and "circles" in err


def test_missing_required_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--windows", "knn:jmax=3"])
    assert exc.value.code == 2
