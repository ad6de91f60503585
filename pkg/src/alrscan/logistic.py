"""Logistic null model and covariate-adjusted window scores.

The null model is ``logit p_i = beta' u_i``; under a window alternative a
shift ``theta`` is added for subjects inside the window.  Window scores are
either full profile-likelihood refits or the efficient-score quadratic form
built from a weighted Gram-Schmidt basis of the covariates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import PointDataset
from .likelihood import ScoreVector
from .windows import WindowSet

log = logging.getLogger(__name__)

MAX_ITER = 50
DIVERGENCE = 30.0
GRAD_TOL = 1e-9  # times J


class LogisticError(ValueError):
    pass


class SeparationError(LogisticError):
    pass


class ConvergenceError(LogisticError):
    pass


class DegenerateWindowError(LogisticError):
    def __init__(self, windows):
        self.windows = tuple(int(b) for b in windows)
        super().__init__(
            f"{len(self.windows)} window indicator(s) lie in the covariate span "
            f"(first: {self.windows[:5]})"
        )


@dataclass(frozen=True, eq=False)
class LogisticFit:
    beta: np.ndarray
    fitted: np.ndarray
    weights: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    loglik: float

    def site_risks(self, ws: WindowSet) -> np.ndarray:
        """Expected case total ``eta_j`` at each site of ``ws``."""
        return ws.site_sums(self.fitted)


def _loglik(z, y, mask):
    # sum_i y z - log(1 + e^z), restricted to mask
    return np.sum(mask * (y * z - np.logaddexp(0.0, z)), axis=-1)


def _solve(H, g):
    try:
        return np.linalg.solve(H, g[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.einsum("bpq,bq->bp", np.linalg.pinv(H), g)


def newton_batch(U, y, A=None, mask=None, offset=None, init=None, max_iter=MAX_ITER, tol=None):
    """Damped Newton ascent for a batch of logistic likelihoods.

    Fit ``b`` has design ``[U, A[b]]`` (or just ``U`` when ``A`` is None) with
    ``U`` shared, ``J x r``.  ``mask`` (``nb x J``) drops subjects from a fit
    and ``offset`` is added to the linear predictor.  Each step is halved
    until the log-likelihood does not decrease.  Returns ``(coef, loglik,
    converged, diverged, iterations, grad_norm)``.
    """
    J, r = U.shape
    shapes = [a.shape[0] for a in (A, mask, offset, init) if a is not None and np.ndim(a) == 2]
    nb = max(shapes) if shapes else 1
    p = r + (A is not None)
    mask = np.ones((nb, J)) if mask is None else np.broadcast_to(mask, (nb, J))
    offset = np.zeros((nb, J)) if offset is None else np.broadcast_to(offset, (nb, J))
    coef = np.zeros((nb, p)) if init is None else np.array(np.broadcast_to(init, (nb, p)), dtype=np.float64)
    tol = GRAD_TOL * J if tol is None else tol
    UU = (U[:, :, None] * U[:, None, :]).reshape(J, r * r)

    def linpred(c, rows):
        z = c[:, :r] @ U.T + offset[rows]
        if A is not None:
            z += c[:, r:] * A[rows]
        return z

    all_rows = np.arange(nb)
    z = linpred(coef, all_rows)
    ll = _loglik(z, y, mask)
    diverged = np.zeros(nb, bool)
    iters = np.zeros(nb, np.int64)
    for _ in range(max_iter + 1):
        res = mask * (y - expit(z))
        grad = res @ U
        if A is not None:
            grad = np.concatenate([grad, np.sum(res * A, axis=1, keepdims=True)], axis=1)
        gnorm = np.max(np.abs(grad), axis=1)
        converged = gnorm < tol
        active = np.flatnonzero(~converged & ~diverged)
        if active.size == 0 or iters.max() >= max_iter:
            break
        pr = expit(z[active])
        w = mask[active] * pr * (1.0 - pr)
        H = np.empty((active.size, p, p))
        H[:, :r, :r] = (w @ UU).reshape(-1, r, r)
        if A is not None:
            wa = w * A[active]
            H[:, :r, r] = H[:, r, :r] = wa @ U
            H[:, r, r] = wa.sum(axis=1)
        step = _solve(H, grad[active])
        t = np.ones(active.size)
        todo = np.arange(active.size)
        for _half in range(40):
            rows = active[todo]
            c = coef[rows] + t[todo, None] * step[todo]
            zz = linpred(c, rows)
            l2 = _loglik(zz, y, mask[rows])
            ok = l2 >= ll[rows] - 1e-12 * np.abs(ll[rows]) - 1e-12
            acc = rows[ok]
            coef[acc], z[acc], ll[acc] = c[ok], zz[ok], l2[ok]
            todo = todo[~ok]
            if todo.size == 0:
                break
            t[todo] *= 0.5
        iters[active] += 1
        diverged |= np.any(np.abs(coef) > DIVERGENCE, axis=1)
    return coef, ll, converged & ~diverged, diverged, iters, gnorm


def fit_logistic_null(data: PointDataset, max_iter: int = MAX_ITER) -> LogisticFit:
    """Maximum-likelihood fit of ``logit p_i = beta' u_i`` from ``beta = 0``."""
    if data.covariates is None:
        raise LogisticError("data has no covariates")
    U = data.covariates
    J, r = U.shape
    if r > J:
        raise LogisticError(f"more covariates ({r}) than subjects ({J})")
    if not 0 < data.I < J:
        raise LogisticError(f"need 0 < I < J (I={data.I}, J={J})")
    y = data.cases.astype(np.float64)
    coef, ll, conv, div, iters, gnorm = newton_batch(U, y, max_iter=max_iter)
    if div[0]:
        raise SeparationError(
            f"coefficient diverged (|beta| > {DIVERGENCE:g}); covariates separate cases from controls"
        )
    if not conv[0]:
        raise ConvergenceError(
            f"null fit did not converge in {max_iter} iterations (gradient {gnorm[0]:.3g})"
        )
    beta = coef[0]
    fitted = expit(U @ beta)
    return LogisticFit(
        beta=beta, fitted=fitted, weights=fitted * (1.0 - fitted), converged=True,
        iterations=int(iters[0]), grad_norm=float(gnorm[0]), loglik=float(ll[0]),
    )


def score_residuals(data: PointDataset, fit: LogisticFit) -> np.ndarray:
    """Score equations ``sum_i u_ik (X_i - p_i)`` at the fit, one per column."""
    return data.covariates.T @ (data.cases - fit.fitted)


@dataclass(frozen=True, eq=False)
class WindowFits:
    scores: np.ndarray
    theta: np.ndarray  # NaN where not fitted, +-inf at boundary windows
    converged: np.ndarray
    path: np.ndarray


def _chunks(N, J, budget=2_000_000):
    size = max(1, budget // max(1, J))
    return [np.arange(s, min(N, s + size)) for s in range(0, N, size)]


def refit_windows(data: PointDataset, ws: WindowSet, fit0: LogisticFit, k: int = 2) -> WindowFits:
    """Profile-likelihood refit of ``(beta, theta)`` for every window.

    Windows with no cases (or only cases) have their supremum at
    ``theta = -inf`` (``+inf``): inside subjects are then fitted exactly and
    the score is the gain from refitting ``beta`` on the outside subjects.
    Windows containing nobody or everybody score 0.
    """
    if k not in (1, 2):
        raise ValueError("sidedness must be 1 or 2")
    if not fit0.converged:
        raise LogisticError("null fit did not converge")
    U = data.covariates
    y = data.cases.astype(np.float64)
    J, r = U.shape
    A_all = ws.subject_matrix
    y_sites = ws.site_sums(y)
    n = ws.n
    m = np.rint(ws.window_sums(y_sites)).astype(np.int64)
    N = ws.N
    scores = np.zeros(N)
    theta = np.full(N, np.nan)
    converged = np.ones(N, bool)
    path = np.full(N, "refit", dtype=object)

    trivial = (n == 0) | (n == J)
    boundary = ~trivial & ((m == 0) | (m == n))
    interior = ~trivial & ~boundary
    theta[trivial] = 0.0
    if k == 1:
        low = boundary & (m == 0)
        theta[low] = -np.inf
        boundary &= ~low

    idx = np.flatnonzero(interior)
    for chunk in _chunks(idx.size, J):
        b = idx[chunk]
        A = A_all[b].toarray()
        init = np.concatenate([np.tile(fit0.beta, (b.size, 1)), np.zeros((b.size, 1))], axis=1)
        coef, ll, conv, _, _, _ = newton_batch(U, y, A=A, init=init)
        th = coef[:, -1]
        s = np.maximum(ll - fit0.loglik, 0.0)
        if k == 1:
            s = np.where(th > 0, s, 0.0)
        scores[b], theta[b], converged[b] = s, th, conv

    idx = np.flatnonzero(boundary)
    for chunk in _chunks(idx.size, J):
        b = idx[chunk]
        A = A_all[b].toarray()
        coef, ll, conv, _, _, _ = newton_batch(U, y, mask=1.0 - A, init=np.tile(fit0.beta, (b.size, 1)))
        scores[b] = np.maximum(ll - fit0.loglik, 0.0)
        theta[b] = np.where(m[b] == 0, -np.inf, np.inf)
        converged[b] = conv
        path[b] = "refit-boundary"
    return WindowFits(scores, theta, converged, path)


def refit_window_scores(data: PointDataset, ws: WindowSet, fit0: LogisticFit, k: int = 2) -> ScoreVector:
    """Covariate-adjusted GLR scores by full refits; failed refits fall back to the quadratic score."""
    fits = refit_windows(data, ws, fit0, k)
    scores = fits.scores.copy()
    path = fits.path.copy()
    bad = np.flatnonzero(~fits.converged)
    if bad.size:
        log.warning("%d window refit(s) failed; using quadratic scores", bad.size)
        quad = quadratic_window_scores(data, ws, fit0, k, degenerate="zero").scores
        scores[bad] = quad[bad]
        path[bad] = "quadratic"
    return ScoreVector(scores, k, "logistic", path, tuple(int(b) for b in bad))


def weighted_gram_schmidt(U: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Columns orthogonal under ``(a . b)_w = sum a_i b_i w_i``, and their squared norms."""
    Ut = np.array(U, dtype=np.float64, copy=True)
    r = Ut.shape[1]
    norms2 = np.zeros(r)
    for kk in range(r):
        for s in range(kk):
            # modified Gram-Schmidt: project out the already-reduced column
            Ut[:, kk] -= (np.sum(Ut[:, kk] * Ut[:, s] * w) / norms2[s]) * Ut[:, s]
        norms2[kk] = np.sum(Ut[:, kk] ** 2 * w)
        if norms2[kk] <= 1e-12 * max(1.0, np.sum(U[:, kk] ** 2 * w)):
            raise LogisticError(f"covariate column {kk} is collinear with earlier columns")
    return Ut, norms2


def quadratic_window_scores(
    data: PointDataset, ws: WindowSet, fit0: LogisticFit, k: int = 2, degenerate: str = "raise"
) -> ScoreVector:
    """Efficient-score approximation to the refit scores, without refitting.

    For window indicator ``a``, let ``res`` be ``a`` minus its weighted
    projection on the covariate columns (weights ``p_i (1 - p_i)`` from the
    null fit).  The score is ``T^2 / (2 v^2)`` with ``T = sum res_i (X_i -
    p_i)`` and ``v^2 = sum w_i res_i^2``.  One-sided scores keep only ``T > 0``.
    ``degenerate`` is ``"raise"`` or ``"zero"`` for windows with ``v^2 ~ 0``.
    """
    if k not in (1, 2):
        raise ValueError("sidedness must be 1 or 2")
    U = data.covariates
    w = fit0.weights
    Ut, norms2 = weighted_gram_schmidt(U, w)
    resid = data.cases - fit0.fitted
    A = ws.subject_matrix
    proj = np.asarray(A @ (Ut * w[:, None]))  # (alpha . u~_k)_w
    aw = np.asarray(A @ w)
    v2 = aw - np.sum(proj ** 2 / norms2, axis=1)
    # the u~ columns are orthogonal to the null residuals, so T reduces to the window sum
    T = np.asarray(A @ resid) - proj @ ((Ut.T @ resid) / norms2)
    bad = v2 <= 1e-10 * np.maximum(aw, 1e-300)
    if np.any(bad) and degenerate == "raise":
        raise DegenerateWindowError(np.flatnonzero(bad))
    s = np.zeros(ws.N)
    ok = ~bad
    s[ok] = T[ok] ** 2 / (2.0 * v2[ok])
    if k == 1:
        s = np.where(T > 0, s, 0.0)
    return ScoreVector(s, k, "logistic", np.full(ws.N, "quadratic", dtype=object))


def profile_loglik(data: PointDataset, members, theta: float, beta0=None) -> float:
    """``max_beta`` log-likelihood with the window shift held at ``theta``."""
    U = data.covariates
    J, r = U.shape
    a = np.zeros(J)
    a[np.asarray(members)] = 1.0
    y = data.cases.astype(np.float64)
    init = None if beta0 is None else np.asarray(beta0, dtype=np.float64)[None]
    coef, ll, conv, _, _, gnorm = newton_batch(U, y, offset=theta * a[None], init=init, tol=1e-11 * J)
    if not conv[0]:
        raise ConvergenceError(f"profile fit at theta={theta} did not converge ({gnorm[0]:.3g})")
    return float(ll[0])
