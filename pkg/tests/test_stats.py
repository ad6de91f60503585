import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alrscan.likelihood import ScoreVector
from alrscan.stats import (
    StatisticError,
    alr_statistic,
    alr_values,
    check_weights,
    scan_statistic,
)


def test_scan_picks_first_max():
    st_ = scan_statistic(np.array([1.0, 3.0, 3.0, 0.5]))
    assert st_.value == 3.0 and st_.argmax == 1 and st_.N == 4


def test_alr_of_equal_scores():
    # U = 2 log(mean e^S) = 2 S when all scores agree
    assert alr_statistic(np.full(7, 1.25)).value == pytest.approx(2.5)


def test_alr_hand_value():
    s = np.array([0.0, math.log(3.0)])
    assert alr_statistic(s).value == pytest.approx(2 * math.log(2.0))


def test_no_overflow_for_huge_scores():
    s = np.array([800.0, 799.0, 0.0])
    u = alr_statistic(s).value
    assert math.isfinite(u)
    assert u == pytest.approx(2 * (800 + math.log1p(math.exp(-1) + math.exp(-800)) - math.log(3)))


def test_sidedness_carried_from_score_vector():
    sv = ScoreVector(np.array([0.1, 0.2]), 1, "test")
    assert alr_statistic(sv).k == 1
    assert scan_statistic(sv).k == 1


def test_weighted_alr():
    s = np.array([0.0, 2.0])
    w = np.array([0.25, 0.75])
    out = alr_statistic(s, w)
    assert out.kind == "weighted_alr"
    assert out.value == pytest.approx(2 * math.log(0.25 + 0.75 * math.e ** 2))


@pytest.mark.parametrize("w", [[0.5, 0.4], [1.0, 0.0], [0.5, 0.5, 0.0]])
def test_weight_validation(w):
    with pytest.raises(StatisticError):
        check_weights(w, 2)


def test_unnormalized_weights_message():
    with pytest.raises(StatisticError, match="normalized"):
        alr_statistic(np.zeros(2), np.array([0.45, 0.45]))


def test_empty_family():
    with pytest.raises(StatisticError):
        scan_statistic(np.array([]))
    with pytest.raises(StatisticError):
        alr_statistic(np.array([]))


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(0.0, 500.0)))
def test_alr_sandwich(s):
    M = scan_statistic(s).value
    U = alr_statistic(s).value
    tol = 1e-9 * max(1.0, M)
    assert 2 * (M - math.log(s.size)) - tol <= U <= 2 * M + tol


def test_alr_values_batch_matches_single():
    g = np.random.default_rng(0)
    s = g.exponential(size=(30, 5))
    batch = alr_values(s)
    for c in range(5):
        assert batch[c] == pytest.approx(alr_statistic(s[:, c]).value, rel=1e-14)
