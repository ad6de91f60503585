"""Scan (maximum) and average-likelihood-ratio summaries of window scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .likelihood import ScoreVector


class StatisticError(ValueError):
    pass


@dataclass(frozen=True)
class TestStatistic:
    kind: str  # "scan", "alr" or "weighted_alr"
    k: int
    value: float
    N: int
    argmax: int | None = None
    weights: str | None = None

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "k": self.k, "value": self.value, "N": self.N}
        if self.argmax is not None:
            out["argmax"] = self.argmax
        if self.weights is not None:
            out["weights"] = self.weights
        return out


def _scores(scores) -> tuple[np.ndarray, int]:
    if isinstance(scores, ScoreVector):
        return scores.scores, scores.k
    return np.asarray(scores, dtype=np.float64), 2


def scan_statistic(scores) -> TestStatistic:
    """Largest score; ties go to the first window in family order."""
    s, k = _scores(scores)
    if s.size == 0:
        raise StatisticError("no windows")
    b = int(np.argmax(s))
    return TestStatistic("scan", k, float(s[b]), int(s.size), argmax=b)


def check_weights(weights, N: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (N,):
        raise StatisticError(f"expected {N} window weights, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise StatisticError("window weights must be positive")
    total = float(np.sum(w))
    if abs(total - 1.0) > 1e-12:
        raise StatisticError(f"window weights must be normalized to sum to 1 (sum = {total!r})")
    return w


def alr_statistic(scores, weights=None) -> TestStatistic:
    """``2 log sum_B w_B exp(S(B))``; uniform ``w_B = 1/N`` unless given."""
    s, k = _scores(scores)
    if s.size == 0:
        raise StatisticError("no windows")
    if weights is None:
        return TestStatistic("alr", k, float(alr_values(s)), int(s.size))
    w = check_weights(weights, s.size)
    value = 2.0 * float(logsumexp(s, b=w))
    return TestStatistic("weighted_alr", k, value, int(s.size), weights="user")


def alr_values(scores: np.ndarray, log_weights: np.ndarray | None = None) -> np.ndarray:
    """ALR of each column of ``scores`` (windows along axis 0)."""
    scores = np.asarray(scores, dtype=np.float64)
    N = scores.shape[0]
    if log_weights is None:
        return 2.0 * (logsumexp(scores, axis=0) - np.log(N))
    lw = np.asarray(log_weights).reshape((N,) + (1,) * (scores.ndim - 1))
    return 2.0 * logsumexp(scores + lw, axis=0)


def scan_values(scores: np.ndarray) -> np.ndarray:
    return np.max(np.asarray(scores), axis=0)
