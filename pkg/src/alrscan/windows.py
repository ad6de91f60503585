"""Scanning-window families and their resolution to subject counts.

Windows are stored over *sites*: distinct locations for circle families
(``unit="locations"``), or individual subjects (``unit="subjects"`` and
explicit index sets).  A window is a row of a sparse ``N x q`` incidence
matrix; subject counts follow from the per-site subject counts, so
co-located subjects never multiply the storage.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .data import PointDataset

# squared distances within this relative gap of a radius count as ties (closed balls)
DIST_RTOL = 1e-12
DIST_ATOL = 0.0


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class FixedRadiusGrid:
    """Circles of one radius centred on the lattice ``(spacing * Z + offset)^d``.

    ``domain`` is a sequence of ``(lo, hi)`` per coordinate (default: the
    bounding box of the data).  Centres must lie in the domain; with
    ``contained`` the whole circle must too.
    """

    radius: float
    spacing: float = 10.0
    offset: float = 5.0
    min_subjects: int = 0
    domain: tuple[tuple[float, float], ...] | None = None
    contained: bool = True

    def __post_init__(self):
        if self.radius < 0 or self.spacing <= 0 or self.min_subjects < 0:
            raise WindowError("grid needs radius >= 0, spacing > 0, min_subjects >= 0")


@dataclass(frozen=True)
class KnnCircles:
    """``C(v_i, r_ij)`` for ranks ``min_rank <= j <= max_rank`` at every site ``i``.

    ``r_ij`` is the ``j``-th smallest distance from site ``i`` to any site
    (``r_i1 = 0``).
    """

    max_rank: int
    max_radius: float | None = None
    min_rank: int = 1
    unit: str = "locations"

    def __post_init__(self):
        if self.max_rank < 1 or not 1 <= self.min_rank <= self.max_rank:
            raise WindowError("knn needs 1 <= min_rank <= max_rank")
        if self.max_radius is not None and self.max_radius < 0:
            raise WindowError("max_radius must be >= 0")
        if self.unit not in ("locations", "subjects"):
            raise WindowError(f"unknown unit {self.unit!r}")


@dataclass(frozen=True)
class AllPairsCircles:
    """``C(v_i, r_ij)`` for every site pair with ``r_ij <= max_radius``."""

    max_radius: float
    unit: str = "locations"

    def __post_init__(self):
        if self.max_radius < 0:
            raise WindowError("max_radius must be >= 0")
        if self.unit not in ("locations", "subjects"):
            raise WindowError(f"unknown unit {self.unit!r}")


@dataclass(frozen=True)
class ExplicitSets:
    """Arbitrary windows given as subject index sets."""

    sets: tuple[tuple[int, ...], ...]

    def __init__(self, sets):
        object.__setattr__(self, "sets", tuple(tuple(int(i) for i in s) for s in sets))


WindowSpec = Union[FixedRadiusGrid, KnnCircles, AllPairsCircles, ExplicitSets]


@dataclass(frozen=True, eq=False)
class WindowSet:
    """An ordered family of windows with counts ``n_B`` and ``m_B``.

    ``sites`` is the ``N x q`` 0/1 incidence matrix (CSR, sorted indices),
    ``site_index`` maps each of the ``J`` subjects to its site and
    ``site_sizes`` holds subjects per site.  Provenance arrays: ``centers``
    (NaN for explicit sets), ``radii`` (NaN for explicit sets),
    ``center_ids`` (site of the centre or -1) and ``ranks`` (knn rank, pair
    index, or set index).
    """

    sites: sparse.csr_matrix
    site_index: np.ndarray
    site_sizes: np.ndarray
    n: np.ndarray
    m: np.ndarray
    centers: np.ndarray
    radii: np.ndarray
    center_ids: np.ndarray
    ranks: np.ndarray
    kind: str
    I: int  # noqa: E741

    @property
    def N(self) -> int:
        return int(self.sites.shape[0])

    @property
    def J(self) -> int:
        return int(self.site_index.shape[0])

    @property
    def q(self) -> int:
        return int(self.sites.shape[1])

    def __len__(self) -> int:
        return self.N

    @property
    def site_counts(self) -> np.ndarray:
        """Number of sites in each window (``#C`` for location-level windows)."""
        return np.diff(self.sites.indptr)

    def window_sites(self, b: int) -> np.ndarray:
        return self.sites.indices[self.sites.indptr[b]:self.sites.indptr[b + 1]]

    def membership(self, b: int) -> np.ndarray:
        """Sorted subject indices of window ``b``."""
        mask = np.zeros(self.q, dtype=bool)
        mask[self.window_sites(b)] = True
        return np.flatnonzero(mask[self.site_index])

    @cached_property
    def site_incidence(self) -> sparse.csr_matrix:
        """``q x J`` matrix mapping subjects to their site."""
        J = self.J
        return sparse.csr_matrix(
            (np.ones(J), (self.site_index, np.arange(J))), shape=(self.q, J)
        )

    @cached_property
    def subject_matrix(self) -> sparse.csr_matrix:
        """``N x J`` 0/1 window-by-subject incidence."""
        out = (self.sites @ self.site_incidence).tocsr()
        out.sort_indices()
        return out

    def site_sums(self, values) -> np.ndarray:
        """Per-site sums of a per-subject vector (or ``J x L`` matrix)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != self.J:
            raise WindowError(f"expected {self.J} subject values, got {values.shape[0]}")
        if values.ndim == 1:
            return np.bincount(self.site_index, weights=values, minlength=self.q)
        return np.asarray(self.site_incidence @ values)

    def window_sums(self, site_values) -> np.ndarray:
        return np.asarray(self.sites @ site_values)

    def provenance_tsv(self) -> str:
        d = self.centers.shape[1]
        head = ["window", *(f"center{k + 1}" for k in range(d)), "radius",
                "center_id", "rank", "n_B", "m_B"]
        lines = ["\t".join(head)]
        for b in range(self.N):
            lines.append("\t".join([
                str(b), *(f"{v:.10g}" for v in self.centers[b]), f"{self.radii[b]:.10g}",
                str(self.center_ids[b]), str(self.ranks[b]), str(self.n[b]), str(self.m[b]),
            ]))
        return "\n".join(lines) + "\n"

    def describe(self, b: int) -> dict:
        out = {"index": int(b), "n_B": int(self.n[b]), "m_B": int(self.m[b])}
        if np.isfinite(self.radii[b]):
            out["center"] = [float(v) for v in self.centers[b]]
            out["radius"] = float(self.radii[b])
        if self.center_ids[b] >= 0:
            out["center_id"] = int(self.center_ids[b])
        out["rank"] = int(self.ranks[b])
        return out


def recount_cases(ws: WindowSet, labels) -> np.ndarray:
    """Per-window case counts ``m_B`` under ``labels`` (length ``J``, or ``J x L``)."""
    labels = np.asarray(labels)
    if labels.shape[0] != ws.J:
        raise WindowError(f"labels have length {labels.shape[0]}, expected J={ws.J}")
    counts = ws.window_sums(ws.site_sums(labels))
    return np.rint(counts).astype(np.int64)


def _within(r2):
    """Squared-radius cutoff that keeps points tied with the radius up to rounding."""
    return r2 * (1.0 + DIST_RTOL) + DIST_ATOL


def _sites_for(data: PointDataset, unit: str) -> tuple[np.ndarray, np.ndarray]:
    if unit == "subjects":
        return data.locations, np.arange(data.J)
    return data.site_coords, data.site_index


def _assemble(data, coords, site_index, rows, centers, radii, center_ids, ranks, kind, dedup):
    q = coords.shape[0]
    if not rows:
        raise WindowError("window family is empty after filtering")
    if dedup:
        seen, keep = set(), []
        for b, r in enumerate(rows):
            key = r.tobytes()
            if key not in seen:
                seen.add(key)
                keep.append(b)
        rows = [rows[b] for b in keep]
        centers, radii = centers[keep], radii[keep]
        center_ids, ranks = center_ids[keep], ranks[keep]
    indptr = np.concatenate([[0], np.cumsum([r.size for r in rows])]).astype(np.int64)
    indices = np.concatenate(rows).astype(np.int64) if indptr[-1] else np.zeros(0, np.int64)
    mat = sparse.csr_matrix((np.ones(indices.size), indices, indptr), shape=(len(rows), q))
    sizes = np.bincount(site_index, minlength=q).astype(np.int64)
    site_cases = np.bincount(site_index, weights=data.cases, minlength=q)
    n = np.rint(mat @ sizes).astype(np.int64)
    m = np.rint(mat @ site_cases).astype(np.int64)
    return WindowSet(
        sites=mat, site_index=np.asarray(site_index), site_sizes=sizes, n=n, m=m,
        centers=np.asarray(centers, dtype=np.float64), radii=np.asarray(radii, dtype=np.float64),
        center_ids=np.asarray(center_ids, dtype=np.int64), ranks=np.asarray(ranks, dtype=np.int64),
        kind=kind, I=data.I,
    )


def _nested(data, spec, dedup):
    coords, site_index = _sites_for(data, spec.unit)
    q, d = coords.shape
    rows, centers, radii, cids, ranks = [], [], [], [], []
    for i in range(q):
        d2 = np.sum((coords - coords[i]) ** 2, axis=1)
        order = np.argsort(d2, kind="stable")
        d2s = d2[order]
        if isinstance(spec, KnnCircles):
            lim = None if spec.max_radius is None else spec.max_radius ** 2
            picks = [
                (j, d2s[j - 1])
                for j in range(spec.min_rank, min(spec.max_rank, q) + 1)
                if lim is None or d2s[j - 1] <= _within(lim)
            ]
        else:
            near = np.flatnonzero(d2 <= _within(spec.max_radius ** 2))
            picks = [(j, d2[j]) for j in near]
        for j, r2 in picks:
            cut = np.searchsorted(d2s, _within(r2), side="right")
            rows.append(np.sort(order[:cut]))
            centers.append(coords[i])
            radii.append(np.sqrt(r2))
            cids.append(i)
            ranks.append(j)
    kind = "knn" if isinstance(spec, KnnCircles) else "allpairs"
    return _assemble(
        data, coords, site_index, rows, np.reshape(centers, (-1, d)), np.array(radii),
        np.array(cids), np.array(ranks), kind, dedup,
    )


def _grid(data, spec: FixedRadiusGrid, dedup):
    coords, site_index = data.site_coords, data.site_index
    q, d = coords.shape
    if spec.domain is None:
        domain = [(float(coords[:, k].min()), float(coords[:, k].max())) for k in range(d)]
    else:
        domain = [tuple(map(float, b)) for b in spec.domain]
        if len(domain) != d:
            raise WindowError(f"domain has {len(domain)} axes, data has {d}")
    w, s, o = spec.radius, spec.spacing, spec.offset
    axes = []
    for lo, hi in domain:
        if spec.contained:
            lo, hi = lo + w, hi - w
        k0, k1 = int(np.ceil((lo - o) / s)), int(np.floor((hi - o) / s))
        axes.append(o + s * np.arange(k0, k1 + 1))
    grid = np.array(list(itertools.product(*axes)), dtype=np.float64).reshape(-1, d)
    sizes = np.bincount(site_index, minlength=q)
    rows, centers = [], []
    if grid.size:
        tree = cKDTree(coords)
        hits = tree.query_ball_point(grid, w * (1 + 1e-9) + 1e-6)
        for v, cand in zip(grid, hits):
            cand = np.asarray(cand, dtype=np.int64)
            if cand.size:
                cand = cand[np.sum((coords[cand] - v) ** 2, axis=1) <= _within(w * w)]
            if cand.size == 0 or sizes[cand].sum() < max(spec.min_subjects, 1):
                continue
            rows.append(np.sort(cand))
            centers.append(v)
    N = len(rows)
    return _assemble(
        data, coords, site_index, rows, np.reshape(centers, (-1, d)), np.full(N, float(w)),
        np.full(N, -1), np.arange(N), "grid", dedup,
    )


def _explicit(data, spec: ExplicitSets, dedup):
    J = data.J
    rows = []
    for b, s in enumerate(spec.sets):
        idx = np.unique(np.asarray(s, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= J):
            raise WindowError(f"explicit set {b} has an index outside [0, {J})")
        rows.append(idx)
    N = len(rows)
    return _assemble(
        data, data.locations, np.arange(J), rows, np.full((N, data.d), np.nan),
        np.full(N, np.nan), np.full(N, -1), np.arange(N), "sets", dedup,
    )


def build_windows(data: PointDataset, spec: WindowSpec, dedup: bool = False) -> WindowSet:
    """Resolve ``spec`` against ``data``.

    Order: grid windows by centre (lexicographic), knn by centre then rank,
    all-pairs by centre then partner site, explicit sets as given.  Balls are
    closed, so distance ties enlarge a window to the whole tied group and can
    repeat windows; repeats are kept unless ``dedup``.
    """
    if data.J < 1:
        raise WindowError("no subjects")
    if isinstance(spec, (KnnCircles, AllPairsCircles)):
        return _nested(data, spec, dedup)
    if isinstance(spec, FixedRadiusGrid):
        return _grid(data, spec, dedup)
    if isinstance(spec, ExplicitSets):
        return _explicit(data, spec, dedup)
    raise WindowError(f"unknown window spec {spec!r}")


def restrict(ws: WindowSet, keep: Sequence[int] | np.ndarray) -> WindowSet:
    """Sub-family with windows ``keep`` (order preserved)."""
    keep = np.asarray(keep)
    if keep.dtype == bool:
        keep = np.flatnonzero(keep)
    if keep.size == 0:
        raise WindowError("window family is empty after filtering")
    return WindowSet(
        sites=ws.sites[keep], site_index=ws.site_index, site_sizes=ws.site_sizes,
        n=ws.n[keep], m=ws.m[keep], centers=ws.centers[keep], radii=ws.radii[keep],
        center_ids=ws.center_ids[keep], ranks=ws.ranks[keep], kind=ws.kind, I=ws.I,
    )
