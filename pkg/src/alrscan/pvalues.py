"""Analytic and Monte Carlo p-values for scan and ALR statistics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.special import comb, erfc
from scipy.stats import chi2 as chi2_dist

from . import rng as rngmod
from .data import PointDataset
from .likelihood import ScoreVector, adjusted_from_counts, glr_from_counts, glr_scores
from .logistic import (
    LogisticError,
    LogisticFit,
    fit_logistic_null,
    quadratic_window_scores,
    refit_window_scores,
)
from .stats import alr_statistic, alr_values, check_weights, scan_statistic, scan_values
from .windows import WindowSet, recount_cases

# replicate ties: a replicate counts as exceeding when it is within this
# relative distance of the observed value (permuted counts can reproduce the
# observed statistic through a different floating-point path)
TIE_RTOL = 1e-9


class PValueError(ValueError):
    pass


@dataclass(frozen=True)
class PValueResult:
    method: str  # chi2, gdist, mc_perm, mc_risk, exact_enum
    p: float
    statistic: float
    k: int | None = None
    L: int | None = None
    exceed: int | None = None
    seed: int | None = None
    se: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"method": self.method, "p": self.p, "statistic": self.statistic}
        for key in ("k", "L", "exceed", "seed", "se"):
            v = getattr(self, key)
            if v is not None:
                out[key] = v
        out.update(self.extra)
        return out


def _mc_result(method, exceed, L, seed, statistic, k=None, **extra) -> PValueResult:
    p = (1 + int(exceed)) / (1 + int(L))
    se = math.sqrt(p * (1.0 - p) / L)
    return PValueResult(method, p, float(statistic), k, int(L), int(exceed), int(seed), se, extra)


def _exceeds(values, observed: float) -> np.ndarray:
    return np.asarray(values) >= observed - TIE_RTOL * max(1.0, abs(observed))


# ---------------------------------------------------------------- analytic tails


def chi2_tail(c):
    """``P{chi^2_1 >= c} = erfc(sqrt(c / 2))``."""
    c = np.asarray(c, dtype=np.float64)
    out = erfc(np.sqrt(np.maximum(c, 0.0) / 2.0))
    return out if out.ndim else float(out)


def chi2_pvalue(c: float, k: int = 2) -> PValueResult:
    if k not in (1, 2):
        raise PValueError("sidedness must be 1 or 2")
    p = min(1.0, k * chi2_tail(c) / 2.0)
    return PValueResult("chi2", p, float(c), k)


@lru_cache(maxsize=None)
def g_x0() -> float:
    """Left end of the support of G: the root of ``2 exp(-x) = pi x``."""
    return brentq(lambda x: 2.0 * math.exp(-x) - math.pi * x, 1e-3, 2.0, xtol=1e-15, rtol=1e-15)


def g_tail(x):
    """``1 - G(x) = sqrt(2 exp(-x) / (pi x))`` for ``x >= x0``, else 1."""
    x = np.asarray(x, dtype=np.float64)
    x0 = g_x0()
    safe = np.maximum(x, x0)
    out = np.exp(0.5 * (math.log(2.0 / math.pi) - safe - np.log(safe)))
    out = np.where(x <= x0, 1.0, np.minimum(out, 1.0))
    return out if out.ndim else float(out)


def gdist_pvalue(c: float, k: int = 2) -> PValueResult:
    if k not in (1, 2):
        raise PValueError("sidedness must be 1 or 2")
    p = min(1.0, k * g_tail(c) / 2.0)
    return PValueResult("gdist", p, float(c), k)


def g_quantile(q, hi: float = 200.0, tol: float = 1e-10):
    """Inverse of G by bisection on ``[x0, hi]`` (``x0`` for ``q <= 0``)."""
    q = np.asarray(q, dtype=np.float64)
    target = 1.0 - q
    lo_b = np.full(q.shape, g_x0())
    hi_b = np.full(q.shape, float(hi))
    while np.any(hi_b - lo_b > tol):
        mid = 0.5 * (lo_b + hi_b)
        right = g_tail(mid) > target
        lo_b = np.where(right, mid, lo_b)
        hi_b = np.where(right, hi_b, mid)
    out = np.where(q <= 0, g_x0(), 0.5 * (lo_b + hi_b))
    return out if out.ndim else float(out)


def chi2_quantile(q):
    out = chi2_dist.ppf(np.asarray(q, dtype=np.float64), 1)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------- pipelines


@dataclass(frozen=True, eq=False)
class StatPipeline:
    """A statistic to recompute under resampled labels.

    ``kind`` is ``scan``, ``alr`` or ``walr``; ``covariates`` is ``off``
    (binomial GLR scores), ``on`` (logistic refits) or ``quadratic``.
    """

    kind: str = "alr"
    k: int = 2
    covariates: str = "off"
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("scan", "alr", "walr"):
            raise PValueError(f"unknown statistic {self.kind!r}")
        if self.k not in (1, 2):
            raise PValueError("sidedness must be 1 or 2")
        if self.covariates not in ("off", "on", "quadratic"):
            raise PValueError(f"unknown covariate mode {self.covariates!r}")

    def scores(self, data: PointDataset, ws: WindowSet, fit0: LogisticFit | None = None) -> ScoreVector:
        if self.covariates == "off":
            return glr_scores(ws, data.I, data.J, self.k, m=recount_cases(ws, data.cases))
        fit0 = fit_logistic_null(data) if fit0 is None else fit0
        if self.covariates == "on":
            return refit_window_scores(data, ws, fit0, self.k)
        return quadratic_window_scores(data, ws, fit0, self.k, degenerate="zero")

    def reduce(self, scores: ScoreVector):
        if self.kind == "scan":
            return scan_statistic(scores)
        if self.kind == "walr" and self.weights is not None:
            return alr_statistic(scores, self.weights)
        return alr_statistic(scores)

    def value(self, data: PointDataset, ws: WindowSet, fit0=None) -> float:
        return self.reduce(self.scores(data, ws, fit0)).value

    def batch_values(self, ws: WindowSet, labels: np.ndarray, I: int, J: int) -> np.ndarray:  # noqa: E741
        """Unadjusted statistic for each column of a ``J x B`` label matrix."""
        m = recount_cases(ws, labels)
        s = glr_from_counts(ws.n, m, I, J, self.k)
        if self.kind == "scan":
            return scan_values(s)
        if self.kind == "walr" and self.weights is not None:
            w = check_weights(self.weights, ws.N)
            return alr_values(s, np.log(w))
        return alr_values(s)


def _perm_block(data, ws, pipeline, seed, block, count):
    g = rngmod.stream(seed, 1, block)
    labels = data.cases
    J, I = data.J, data.I
    if pipeline.covariates == "off":
        sub = max(1, min(count, 4_000_000 // max(J, 1)))
        out = []
        done = 0
        while done < count:
            b = min(sub, count - done)
            mat = np.empty((J, b), dtype=np.float64)
            for c in range(b):
                mat[:, c] = g.permutation(labels)
            out.append(pipeline.batch_values(ws, mat, I, J))
            done += b
        return np.concatenate(out), 0
    vals = np.empty(count)
    failures = 0
    for c in range(count):
        perm = data.with_cases(g.permutation(labels))
        try:
            vals[c] = pipeline.value(perm, ws)
        except LogisticError:
            vals[c] = -np.inf
            failures += 1
    return vals, failures


def permutation_values(data, ws, pipeline, L, seed, threads=None):
    """Statistic under ``L`` label permutations (replicate order), and fit failures."""
    parts = rngmod.map_ordered(
        lambda t: _perm_block(data, ws, pipeline, seed, t[0], t[2]), rngmod.blocks(L), threads
    )
    return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)


def permutation_pvalue(
    data: PointDataset, ws: WindowSet, pipeline: StatPipeline, L: int, seed: int,
    threads: int | None = None, observed: float | None = None,
) -> PValueResult:
    """Conditional p-value given ``(I, x)`` from ``L`` random label permutations.

    Covariates, if used, stay attached to their subjects; only labels move.
    """
    if L < 1:
        raise PValueError("need L >= 1")
    obs = pipeline.value(data, ws) if observed is None else float(observed)
    vals, failures = permutation_values(data, ws, pipeline, L, seed, threads)
    exceed = int(np.sum(_exceeds(vals, obs)))
    extra = {"fit_failures": failures} if failures else {}
    return _mc_result("mc_perm", exceed, L, seed, obs, pipeline.k, **extra)


def exact_permutation_oracle(
    data: PointDataset, ws: WindowSet, pipeline: StatPipeline, observed: float | None = None,
    limit: int = 1_000_000,
) -> float:
    """Fraction of all ``C(J, I)`` case placements with statistic >= observed.

    No ``+1`` correction: the Monte Carlo estimate ``(1 + exceed)/(1 + L)``
    converges to this value as ``L`` grows.
    """
    if pipeline.covariates != "off":
        raise PValueError("exact enumeration supports unadjusted scores only")
    J, I = data.J, data.I
    total = int(comb(J, I, exact=True))
    if total > limit:
        raise PValueError(f"C({J}, {I}) = {total} placements exceeds the enumeration limit {limit}")
    obs = pipeline.value(data, ws) if observed is None else float(observed)
    combos = itertools.combinations(range(J), I)
    exceed = 0
    chunk = max(1, min(4096, 4_000_000 // max(J, 1)))
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            break
        mat = np.zeros((J, len(block)))
        if I:
            cols = np.repeat(np.arange(len(block)), I)
            mat[np.asarray(block).reshape(-1), cols] = 1.0
        exceed += int(np.sum(_exceeds(pipeline.batch_values(ws, mat, I, J), obs)))
    return exceed / total


# ---------------------------------------------------------------- risk adjusted


def site_atoms(ws: WindowSet) -> tuple[np.ndarray, sparse.csr_matrix]:
    """Group sites with identical window membership.

    Returns the atom id of each site and the ``N x A`` window-by-atom
    incidence.  Resampling counts over atoms is distributionally identical
    to resampling over sites for any statistic of window totals.
    """
    csc = ws.sites.tocsc()
    csc.sort_indices()
    keys: dict[bytes, int] = {}
    atom = np.empty(ws.q, dtype=np.int64)
    for j in range(ws.q):
        key = csc.indices[csc.indptr[j]:csc.indptr[j + 1]].tobytes()
        atom[j] = keys.setdefault(key, len(keys))
    S = sparse.csr_matrix((np.ones(ws.q), (np.arange(ws.q), atom)), shape=(ws.q, len(keys)))
    W = (ws.sites @ S).tocsr()
    W.data[:] = 1.0
    return atom, W


def adjusted_scan_value(ws: WindowSet, eta_sites, I: int, m=None) -> float:  # noqa: E741
    m = ws.m if m is None else m
    return float(np.max(adjusted_from_counts(m, ws.window_sums(eta_sites), I)))


def risk_adjusted_mc_pvalue(
    data: PointDataset, ws: WindowSet, fit0: LogisticFit, L: int, seed: int,
    threads: int | None = None,
) -> PValueResult:
    """Monte Carlo p-value of the risk-adjusted scan statistic.

    Expected totals ``eta_j`` are sums of null-fit risks per site; each
    replicate draws site case counts from a multinomial with ``I`` trials and
    probabilities ``eta_j / I``.
    """
    if not fit0.converged:
        raise PValueError("null fit did not converge")
    if L < 1:
        raise PValueError("need L >= 1")
    I = data.I  # noqa: E741
    eta = fit0.site_risks(ws)
    if abs(eta.sum() - I) > 1e-6 * I:
        raise PValueError(f"expected risks sum to {eta.sum():.8g}, not I={I}")
    m_obs = recount_cases(ws, data.cases)
    eta_B = ws.window_sums(eta)
    obs = float(np.max(adjusted_from_counts(m_obs, eta_B, I)))
    atom, W = site_atoms(ws)
    eta_atom = np.bincount(atom, weights=eta, minlength=W.shape[1])
    probs = eta_atom / eta_atom.sum()

    def run(t):
        b, _, count = t
        g = rngmod.stream(seed, 2, b)
        draws = g.multinomial(I, probs, size=count).T  # atoms x count
        m = np.rint(W @ draws).astype(np.int64)
        return np.max(adjusted_from_counts(m, eta_B, I), axis=0)

    vals = np.concatenate(rngmod.map_ordered(run, rngmod.blocks(L), threads))
    exceed = int(np.sum(_exceeds(vals, obs)))
    return _mc_result("mc_risk", exceed, L, seed, obs, 2)
