"""Binomial GLR window scores.

All logarithms are natural; scores are in nats.  Zero counts are handled by
explicit masking so that ``0 log 0 = 0`` holds without producing NaNs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .windows import WindowSet


class ScoreError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Per-window scores aligned with a :class:`WindowSet`.

    ``path`` records how each score was produced (``"glr"``, ``"adjusted"``,
    ``"refit"``, ``"refit-boundary"`` or ``"quadratic"``); ``flagged`` lists
    windows whose refit failed and fell back to the quadratic score.
    """

    scores: np.ndarray
    k: int
    baseline: str
    path: np.ndarray | None = None
    flagged: tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return int(self.scores.shape[0])


def xlogy_ratio(a, b):
    """``a * log(a / b)`` elementwise with ``0 log 0 = 0`` (``b`` only read where ``a > 0``)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a, b = np.broadcast_arrays(a, b)
    out = np.zeros(a.shape)
    pos = a > 0
    out[pos] = a[pos] * np.log(a[pos] / b[pos])
    return out if out.ndim else float(out)


def phi(p, p0: float):
    """Kullback-Leibler divergence of Bernoulli(p) from Bernoulli(p0)."""
    if not 0.0 < p0 < 1.0:
        raise ScoreError(f"p0 must lie in (0, 1), got {p0}")
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ScoreError("proportions must lie in [0, 1]")
    return xlogy_ratio(p, p0) + xlogy_ratio(1.0 - p, 1.0 - p0)


def glr_from_counts(n, m, I: int, J: int, k: int = 2) -> np.ndarray:  # noqa: E741
    """Two-sided (``k=2``) or one-sided (``k=1``) GLR scores from window counts.

    Written in count form, ``n phi(m/n) = m log(m/(n p0)) + (n-m) log((n-m)/(n(1-p0)))``,
    which is exact at empty and full windows.  ``n`` and ``m`` may carry extra
    trailing axes (e.g. one column per Monte Carlo replicate).
    """
    if k not in (1, 2):
        raise ScoreError(f"sidedness must be 1 or 2, got {k}")
    if not 0 < I < J:
        raise ScoreError(f"need 0 < I < J for a non-degenerate null fit (I={I}, J={J})")
    n = np.asarray(n, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if n.ndim < m.ndim:
        n = n.reshape(n.shape + (1,) * (m.ndim - n.ndim))
    p0 = I / J
    q0 = (J - I) / J
    nc = J - n
    mc = I - m
    s = (
        xlogy_ratio(m, n * p0)
        + xlogy_ratio(n - m, n * q0)
        + xlogy_ratio(mc, nc * p0)
        + xlogy_ratio(nc - mc, nc * q0)
    )
    s = np.maximum(s, 0.0)
    if k == 1:
        # m/n > I/J, compared exactly in integers
        s = np.where(m * J > I * n, s, 0.0)
    return s


def glr_scores(ws: WindowSet, I: int, J: int, k: int = 2, m=None) -> ScoreVector:  # noqa: E741
    """Scores of every window of ``ws`` (case counts ``m`` default to ``ws.m``)."""
    m = ws.m if m is None else np.asarray(m)
    s = glr_from_counts(ws.n, m, I, J, k)
    return ScoreVector(s, k, f"p0={I}/{J}", np.full(s.shape, "glr", dtype=object))


def adjusted_from_counts(m, eta_B, I: int) -> np.ndarray:  # noqa: E741
    """Risk-adjusted two-sided score ``m log(m/eta) + (I-m) log((I-m)/(I-eta))``."""
    m = np.asarray(m, dtype=np.float64)
    eta_B = np.asarray(eta_B, dtype=np.float64)
    if eta_B.ndim < m.ndim:
        eta_B = eta_B.reshape(eta_B.shape + (1,) * (m.ndim - eta_B.ndim))
    tol = 1e-12 * I
    if np.any((eta_B <= tol) & (m > 0)) or np.any((eta_B >= I - tol) & (m < I)):
        raise ScoreError("degenerate baseline: window with eta_B in {0, I} carries data mass")
    s = xlogy_ratio(m, eta_B) + xlogy_ratio(I - m, I - eta_B)
    return np.maximum(s, 0.0)


def adjusted_scores(ws: WindowSet, eta, I: int, m=None) -> ScoreVector:  # noqa: E741
    """Scores against per-site expected case totals ``eta`` (one value per site of ``ws``)."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (ws.q,):
        raise ScoreError(f"eta must have one entry per site ({ws.q})")
    if np.any(eta < 0):
        raise ScoreError("expected risks must be non-negative")
    if abs(eta.sum() - I) > 1e-6 * I:
        raise ScoreError(f"expected risks sum to {eta.sum():.6g}, not I={I}")
    m = ws.m if m is None else np.asarray(m)
    s = adjusted_from_counts(m, ws.window_sums(eta), I)
    return ScoreVector(s, 2, "risk-adjusted", np.full(s.shape, "adjusted", dtype=object))
