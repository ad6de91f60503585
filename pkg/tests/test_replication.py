import json

import numpy as np
import pytest

from alrscan.data import write_point_csv
from alrscan.replication import (
    ConfigError,
    Example1Config,
    Example2Config,
    PowerConfig,
    QQConfig,
    example1_layout,
    load_config,
    run_example1,
    run_example2,
    run_power_study,
    run_qq_experiment,
    solve_cluster_probs,
    write_outputs,
)

from conftest import random_points


def test_config_from_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"thetas": [0.0, 0.3], "replicates": 5}))
    cfg = load_config("example1", path)
    assert cfg.thetas == (0.0, 0.3) and cfg.replicates == 5 and cfg.mc_L == 999


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown experiment"):
        load_config("example9")
    with pytest.raises(ConfigError, match="thetaz"):
        load_config("example1", overrides={"thetaz": [0.1]})
    with pytest.raises(ConfigError, match="data, circles"):
        load_config("power")
    with pytest.raises(ConfigError, match="probabilities"):
        load_config("example2", overrides={"p1s": [1.5]})
    with pytest.raises(ConfigError, match=">= 1"):
        load_config("example1", overrides={"replicates": 0})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config("qq", bad)


def test_example1_covariates_frozen_per_seed():
    a = example1_layout(Example1Config(seed=3))
    b = example1_layout(Example1Config(seed=3))
    c = example1_layout(Example1Config(seed=4))
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])
    # block 1 covariates are shifted by one unit
    assert a[1][a[2]].mean() - a[1][~a[2]].mean() == pytest.approx(1.0, abs=0.15)


def test_example1_table_shape_and_determinism():
    cfg = Example1Config(replicates=6, mc_L=19, block_size=200)
    r1 = run_example1(cfg, threads=1)
    r2 = run_example1(cfg, threads=3)
    assert r1["rows"] == r2["rows"]
    assert [row["theta"] for row in r1["rows"]] == [0.0, 0.2, 0.4, 0.6]
    assert set(r1["rows"][0]) == {"theta", "mc_0.05", "alr_0.05", "mc_0.01", "alr_0.01"}


def test_example2_deterministic_and_quadratic_switch():
    cfg = Example2Config(p1s=(0.05, 0.4), replicates=5, mc_L=19)
    assert run_example2(cfg, threads=1)["rows"] == run_example2(cfg, threads=2)["rows"]
    quad = run_example2(Example2Config(p1s=(0.4,), replicates=5, mc_L=19, score_path="quadratic"))
    assert 0.0 <= quad["rows"][0]["alr_0.05"] <= 1.0


@pytest.mark.parametrize("n,rr", [(12, 10.0), (50, 1.0), (3, 2.5), (0, 4.0)])
def test_cluster_probabilities_meet_constraint(n, rr):
    J, I = 1036, 58  # noqa: E741
    p, q = solve_cluster_probs(n, J, I, rr)
    assert n * p + (J - n) * q == pytest.approx(I, abs=1e-12)
    assert p == pytest.approx(rr * q, rel=1e-15)
    if rr == 1.0:
        assert p == q == pytest.approx(I / J)


def test_infeasible_relative_risk():
    with pytest.raises(ConfigError, match="infeasible"):
        solve_cluster_probs(10, 100, 50, 20.0)


def test_power_null_case_is_nominal(tmp_path):
    data = random_points(31, J=300, p=0.1)
    cfg = PowerConfig(
        circles=[{"center": [50, 50], "rr": 1.0}, {"center": [50, 50], "rr": 6.0}],
        radius=20, grid_radius=20, spacing=10, offset=5, min_subjects=2,
        domain=[[0, 100], [0, 100]], alpha=0.05, null_L=2000, replicates=600, seed=2,
    )
    res = run_power_study(cfg, data, threads=1)
    null, alt = res["rows"]
    for key in ("power_u", "power_m"):
        se = np.sqrt(0.05 * 0.95 / cfg.replicates)
        assert abs(null[key] - 0.05) <= 3 * se
        assert alt[key] > null[key]
    assert null["se_u"] == pytest.approx(np.sqrt(null["power_u"] * (1 - null["power_u"]) / 600))


def test_power_reads_data_file(tmp_path):
    data = random_points(32, J=200, p=0.1)
    write_point_csv(data, tmp_path / "d.csv")
    cfg = PowerConfig(data=str(tmp_path / "d.csv"), circles=[{"center": [50, 50], "rr": 3.0}],
                      radius=25, grid_radius=25, replicates=20, critical_u=5.0, critical_m=8.0)
    res = run_power_study(cfg)
    assert res["critical_u"] == 5.0 and "null_L" not in res


def test_qq_gaussian_shape(tmp_path):
    res = run_qq_experiment(QQConfig(mode="gaussian", n=10, max_radius=0.2, L=10_000, seed=1))
    assert res["qq"].shape == (10_000, 3)
    assert np.all(np.diff(res["qq"][:, 0]) >= 0)
    paths = write_outputs(res, tmp_path)
    lines = paths[0].read_text().splitlines()
    assert len(lines) == 10_001 and lines[0].split("\t") == ["statistic", "chi2_quantile", "g_quantile"]


def test_qq_bernoulli_mode():
    res = run_qq_experiment(QQConfig(mode="bernoulli", n=30, population=40, p0=0.1, max_radius=0.3, L=400))
    assert res["qq"].shape == (400, 3)
    assert np.all(res["qq"][:, 0] >= 0)


def test_table_output(tmp_path):
    res = run_example1(Example1Config(replicates=3, mc_L=9, block_size=100))
    tsv, js = write_outputs(res, tmp_path)
    rows = tsv.read_text().splitlines()
    assert len(rows) == 5
    assert all(len(r.split("\t")) == 5 for r in rows)
    summary = json.loads(js.read_text())
    assert summary["experiment"] == "example1" and len(summary["se"]) == 4
