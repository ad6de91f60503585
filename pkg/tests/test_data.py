import numpy as np
import pytest

from alrscan.data import (
    AggregatedDataset,
    DataError,
    PointDataset,
    load_aggregated_csv,
    load_dataset,
    load_point_csv,
    write_aggregated_csv,
    write_point_csv,
)

from conftest import random_points


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_point_csv_basic(tmp_path):
    p = write(tmp_path, "id,x,y,case\n# comment\na,0,0,1\nb,1,0,0\n\nc,0,2.5,0\n")
    d = load_point_csv(p)
    assert d.J == 3 and d.I == 1 and d.d == 2
    assert d.ids == ("a", "b", "c")
    assert d.p0 == pytest.approx(1 / 3)
    assert d.covariates is None


def test_covariates_get_intercept(tmp_path):
    d = load_point_csv(write(tmp_path, "id,x,y,case,age,smoker\n1,0,0,1,50,1\n2,1,1,0,40,0\n"))
    assert d.r == 3
    np.testing.assert_array_equal(d.covariates[:, 0], 1.0)
    assert d.covariate_names == ("age", "smoker")


@pytest.mark.parametrize("bad", ["2", "yes", "-1", "0.5"])
def test_bad_label_names_line(tmp_path, bad):
    p = write(tmp_path, f"id,x,y,case\n1,0,0,1\n2,1,1,{bad}\n")
    with pytest.raises(DataError, match="line 3"):
        load_point_csv(p)


def test_wrong_field_count(tmp_path):
    with pytest.raises(DataError, match="line 2"):
        load_point_csv(write(tmp_path, "id,x,y,case\n1,0,0\n"))


def test_non_numeric_coordinate(tmp_path):
    with pytest.raises(DataError, match="line 3"):
        load_point_csv(write(tmp_path, "id,x,y,case\n1,0,0,1\n2,abc,0,0\n"))


def test_aggregated_roundtrip_and_expand(tmp_path):
    agg = AggregatedDataset(np.array([[0.0, 0.0], [1.0, 2.0]]), np.array([2, 0]), np.array([3, 4]))
    path = tmp_path / "agg.csv"
    write_aggregated_csv(agg, path)
    back = load_dataset(path)
    assert isinstance(back, AggregatedDataset)
    pts = back.expand()
    assert pts.J == 7 and pts.I == 2
    np.testing.assert_array_equal(pts.cases, [1, 1, 0, 0, 0, 0, 0])


def test_aggregated_rejects_cases_above_population(tmp_path):
    p = write(tmp_path, "id,x,y,cases,population\n1,0,0,5,4\n")
    with pytest.raises(DataError, match="line 2"):
        load_aggregated_csv(p)


def test_point_roundtrip(tmp_path):
    d = random_points(4, J=30, covariates=2)
    d = PointDataset(d.locations, d.cases, d.covariates, covariate_names=("u1", "u2"))
    path = tmp_path / "p.csv"
    write_point_csv(d, path)
    back = load_dataset(path)
    np.testing.assert_array_equal(back.locations, d.locations)
    np.testing.assert_array_equal(back.cases, d.cases)
    np.testing.assert_array_equal(back.covariates, d.covariates)


def test_sites_first_appearance_order():
    d = PointDataset(np.array([[2.0, 0], [1.0, 0], [2.0, 0], [0.0, 0]]), np.array([1, 0, 0, 1]))
    np.testing.assert_array_equal(d.site_index, [0, 1, 0, 2])
    np.testing.assert_array_equal(d.site_coords, [[2, 0], [1, 0], [0, 0]])


def test_standardized_keeps_intercept():
    d = random_points(1, J=50, covariates=2)
    s = d.standardized()
    np.testing.assert_array_equal(s.covariates[:, 0], 1.0)
    np.testing.assert_allclose(s.covariates[:, 1:].mean(axis=0), 0.0, atol=1e-12)


def test_dataset_is_read_only(points):
    with pytest.raises(ValueError):
        points.cases[0] = 0
