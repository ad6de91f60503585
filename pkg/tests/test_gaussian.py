import math

import numpy as np
import pytest

from alrscan.data import PointDataset
from alrscan.gaussian import (
    GaussianFieldError,
    simulate_uz,
    simulate_z_field,
    simulate_z_moments,
    uz_statistic,
    uz_values,
    z_from_normals,
)
from alrscan.replication import QQConfig, gaussian_qq_windows
from alrscan.windows import AllPairsCircles, ExplicitSets, build_windows


def line_sites(n):
    return PointDataset(np.arange(float(n))[:, None], np.zeros(n, dtype=int))


def test_z_hand_value():
    ws = build_windows(line_sites(4), ExplicitSets([[0], [1, 2]]))
    y = np.array([1.0, 2.0, -1.0, 0.0])
    z = z_from_normals(ws, y[None])[:, 0]
    ybar = y.mean()
    assert z[0] == pytest.approx((y[0] - ybar) / math.sqrt(1 * 0.75))
    assert z[1] == pytest.approx((y[1] + y[2] - 2 * ybar) / math.sqrt(2 * 0.5))


def test_z_standardized():
    ws = gaussian_qq_windows(QQConfig(n=20, max_radius=0.3))
    mean, var = simulate_z_moments(ws, 20_000, seed=4)
    assert np.max(np.abs(mean)) < 0.05
    assert np.max(np.abs(var - 1)) < 0.05


def test_single_field_matches_batch():
    ws = gaussian_qq_windows(QQConfig(n=15))
    u1, u2 = simulate_uz(ws, 1500, seed=8, threads=1)
    for rep in (0, 17, 1100):
        field = simulate_z_field(ws, 8, rep)
        assert uz_statistic(field, 2) == pytest.approx(u2[rep], rel=1e-12)
        assert uz_statistic(field, 1) == pytest.approx(u1[rep], rel=1e-12)


def test_deterministic_across_threads():
    ws = gaussian_qq_windows(QQConfig(n=12))
    a = simulate_uz(ws, 3000, seed=2, threads=1)
    b = simulate_uz(ws, 3000, seed=2, threads=4)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_one_sided_not_above_two_sided():
    ws = gaussian_qq_windows(QQConfig(n=12))
    u1, u2 = simulate_uz(ws, 500, seed=1)
    assert np.all(u1 <= u2 + 1e-12)


def test_uz_of_zero_field():
    assert uz_values(np.zeros((5, 1)), 2)[0] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        uz_values(np.zeros((5, 1)), 3)


def test_full_window_rejected():
    ws = build_windows(line_sites(4), ExplicitSets([[0, 1, 2, 3]]))
    with pytest.raises(GaussianFieldError):
        simulate_uz(ws, 10, seed=0)


def test_qq_windows_drop_trivial():
    ws = gaussian_qq_windows(QQConfig(n=10, max_radius=0.2))
    assert np.all((ws.site_counts > 0) & (ws.site_counts < 10))
    full = build_windows(ws_data := line_sites(3), AllPairsCircles(5.0))
    assert np.any(full.site_counts == ws_data.J)
