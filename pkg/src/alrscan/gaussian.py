"""Gaussian analogue of the window score process.

For standard normals ``Y_1..Y_n`` at ``n`` locations, each window ``C`` gets
``Z_C = sum_{i in C} (Y_i - Ybar) / sqrt(#C (1 - #C/n))``, which has mean 0
and variance 1.  ``U_Z`` averages ``exp(Z_C^2 / 2)`` (two-sided) or
``exp(max(Z_C, 0)^2 / 2)`` (one-sided) on the same ``2 log`` scale as the ALR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import rng as rngmod
from .windows import WindowSet


class GaussianFieldError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ZField:
    z: np.ndarray
    n: int
    sizes: np.ndarray


def _check(ws: WindowSet) -> tuple[int, np.ndarray]:
    n = ws.q
    sizes = ws.site_counts
    if np.any((sizes == 0) | (sizes == n)):
        raise GaussianFieldError("every window needs 0 < #C < n locations")
    return n, sizes


def z_from_normals(ws: WindowSet, Y: np.ndarray) -> np.ndarray:
    """Z values (``N x B``) for normals ``Y`` (``B x n``, one row per replicate)."""
    n, sizes = _check(ws)
    Y = np.atleast_2d(Y)
    centred = Y - Y.mean(axis=1, keepdims=True)
    scale = np.sqrt(sizes * (1.0 - sizes / n))
    return np.asarray(ws.sites @ centred.T) / scale[:, None]


def _normals(seed: int, block: int, count: int, n: int) -> np.ndarray:
    return rngmod.stream(seed, 3, block).standard_normal((count, n))


def simulate_z_field(ws: WindowSet, seed: int, replicate: int) -> ZField:
    """Z field of one replicate, identical to that replicate inside :func:`simulate_uz`."""
    n, sizes = _check(ws)
    b, pos = divmod(int(replicate), rngmod.BLOCK)
    Y = _normals(seed, b, pos + 1, n)[pos]
    return ZField(z_from_normals(ws, Y)[:, 0], n, sizes)


def uz_values(z: np.ndarray, k: int = 2) -> np.ndarray:
    """U_Z for each column of ``z`` (windows along axis 0)."""
    if k not in (1, 2):
        raise ValueError("sidedness must be 1 or 2")
    z = np.asarray(z, dtype=np.float64)
    if k == 1:
        z = np.maximum(z, 0.0)
    return 2.0 * (logsumexp(0.5 * z * z, axis=0) - np.log(z.shape[0]))


def uz_statistic(field: ZField | np.ndarray, k: int = 2) -> float:
    z = field.z if isinstance(field, ZField) else np.asarray(field)
    if z.size == 0:
        raise GaussianFieldError("empty field")
    return float(uz_values(z.reshape(-1, 1), k)[0])


def simulate_uz(ws: WindowSet, L: int, seed: int, threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(U_Z one-sided, U_Z two-sided)`` for replicates ``0..L-1``."""
    n, _ = _check(ws)

    def run(t):
        b, _, count = t
        z = z_from_normals(ws, _normals(seed, b, count, n))
        return uz_values(z, 1), uz_values(z, 2)

    parts = rngmod.map_ordered(run, rngmod.blocks(L), threads)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def simulate_z_moments(ws: WindowSet, L: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-window sample mean and variance of ``Z_C`` over ``L`` replicates."""
    n, _ = _check(ws)
    s1 = np.zeros(ws.N)
    s2 = np.zeros(ws.N)
    for b, _, count in rngmod.blocks(L):
        z = z_from_normals(ws, _normals(seed, b, count, n))
        s1 += z.sum(axis=1)
        s2 += (z * z).sum(axis=1)
    mean = s1 / L
    return mean, (s2 - L * mean ** 2) / (L - 1)
