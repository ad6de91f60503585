"""Case-control point data and aggregated case-population data."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised when an input file or array fails validation."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointDataset:
    """Subjects at locations ``x_i`` with binary case labels ``X_i``.

    ``covariates``, when present, is a ``(J, r)`` matrix whose first column is
    the intercept (all ones).
    """

    locations: np.ndarray
    cases: np.ndarray
    covariates: np.ndarray | None = None
    ids: tuple[str, ...] | None = None
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=np.float64)
        if loc.ndim == 1:
            loc = loc[:, None]
        if loc.ndim != 2 or loc.shape[1] < 1:
            raise DataError("locations must be a (J, d) array")
        if not np.all(np.isfinite(loc)):
            raise DataError("non-finite coordinate")
        cases = np.asarray(self.cases)
        if cases.shape != (loc.shape[0],):
            raise DataError("cases and locations differ in length")
        if cases.size and not np.all((cases == 0) | (cases == 1)):
            raise DataError("case labels must be 0 or 1")
        object.__setattr__(self, "locations", _frozen(loc))
        object.__setattr__(self, "cases", _frozen(cases.astype(np.int64)))
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=np.float64)
            if cov.ndim != 2 or cov.shape[0] != loc.shape[0]:
                raise DataError("covariate matrix must have one row per subject")
            if cov.shape[1] < 1 or not np.all(cov[:, 0] == 1.0):
                raise DataError("first covariate column must be the intercept (all ones)")
            if not np.all(np.isfinite(cov)):
                raise DataError("non-finite covariate value")
            object.__setattr__(self, "covariates", _frozen(cov))
            names = tuple(self.covariate_names)
            if len(names) != cov.shape[1] - 1:
                names = tuple(f"cov{k}" for k in range(1, cov.shape[1]))
            object.__setattr__(self, "covariate_names", names)
        if self.ids is not None:
            if len(self.ids) != loc.shape[0]:
                raise DataError("ids and locations differ in length")
            object.__setattr__(self, "ids", tuple(str(s) for s in self.ids))

    @property
    def J(self) -> int:
        return int(self.cases.shape[0])

    @property
    def I(self) -> int:  # noqa: E743
        return int(self.cases.sum())

    @property
    def d(self) -> int:
        return int(self.locations.shape[1])

    @property
    def p0(self) -> float:
        """Null MLE of the case probability, I/J."""
        return self.I / self.J

    @property
    def r(self) -> int:
        return 0 if self.covariates is None else int(self.covariates.shape[1])

    @cached_property
    def _sites(self) -> tuple[np.ndarray, np.ndarray]:
        # distinct locations in order of first appearance
        _, first, inverse = np.unique(
            self.locations, axis=0, return_index=True, return_inverse=True
        )
        inverse = np.asarray(inverse).reshape(-1)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        coords = self.locations[first[order]]
        return _frozen(coords), _frozen(rank[inverse])

    @property
    def site_coords(self) -> np.ndarray:
        """Distinct locations, ordered by first appearance."""
        return self._sites[0]

    @property
    def site_index(self) -> np.ndarray:
        """Site id of each subject (index into :attr:`site_coords`)."""
        return self._sites[1]

    def with_cases(self, cases) -> "PointDataset":
        return PointDataset(
            self.locations, cases, self.covariates, self.ids, self.covariate_names
        )

    def with_covariates(self, covariates, names=()) -> "PointDataset":
        return PointDataset(self.locations, self.cases, covariates, self.ids, tuple(names))

    def standardized(self) -> "PointDataset":
        """Copy with non-intercept covariate columns centred and scaled to unit SD."""
        if self.covariates is None:
            return self
        cov = self.covariates.copy()
        rest = cov[:, 1:]
        sd = rest.std(axis=0)
        sd[sd == 0] = 1.0
        cov[:, 1:] = (rest - rest.mean(axis=0)) / sd
        return PointDataset(self.locations, self.cases, cov, self.ids, self.covariate_names)


@dataclass(frozen=True, eq=False)
class AggregatedDataset:
    """Case counts ``m_j`` out of populations ``n_j`` at centroids ``v_j``."""

    centroids: np.ndarray
    case_counts: np.ndarray
    populations: np.ndarray
    ids: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim == 1:
            c = c[:, None]
        m = np.asarray(self.case_counts)
        n = np.asarray(self.populations)
        if m.shape != (c.shape[0],) or n.shape != (c.shape[0],):
            raise DataError("centroids, case_counts and populations differ in length")
        if not np.all(np.isfinite(c)):
            raise DataError("non-finite coordinate")
        if np.any(m < 0) or np.any(n < 1) or np.any(m > n):
            raise DataError("need 0 <= cases <= population and population >= 1")
        object.__setattr__(self, "centroids", _frozen(c))
        object.__setattr__(self, "case_counts", _frozen(m.astype(np.int64)))
        object.__setattr__(self, "populations", _frozen(n.astype(np.int64)))

    @property
    def q(self) -> int:
        return int(self.centroids.shape[0])

    def expand(self) -> PointDataset:
        """Replicate centroid ``j`` ``n_j`` times, the first ``m_j`` as cases."""
        n = self.populations
        locations = np.repeat(self.centroids, n, axis=0)
        start = np.concatenate([[0], np.cumsum(n)[:-1]])
        offset = np.arange(int(n.sum())) - np.repeat(start, n)
        cases = (offset < np.repeat(self.case_counts, n)).astype(np.int64)
        return PointDataset(locations, cases)


def _data_lines(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, line


def _read_rows(path):
    text = Path(path).read_text(encoding="utf-8")
    lines = list(_data_lines(text))
    if not lines:
        raise DataError(f"{path}: empty file")
    header_no, header_line = lines[0]
    header = [h.strip() for h in next(csv.reader([header_line]))]
    rows = []
    for lineno, line in lines[1:]:
        row = [v.strip() for v in next(csv.reader([line]))]
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} fields, got {len(row)}", lineno)
        rows.append((lineno, row))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, rows


def _coord_columns(header: list[str]) -> list[int]:
    if "x" in header:
        cols = [header.index("x")]
        if "y" in header:
            cols.append(header.index("y"))
        if "z" in header:
            cols.append(header.index("z"))
        return cols
    cols = []
    k = 1
    while f"x{k}" in header:
        cols.append(header.index(f"x{k}"))
        k += 1
    if not cols:
        raise DataError("header has no coordinate columns (x,y or x1..xd)", 1)
    return cols


def _float(value: str, lineno: int, what: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise DataError(f"cannot parse {what} {value!r}", lineno) from None
    if not math.isfinite(v):
        raise DataError(f"non-finite {what} {value!r}", lineno)
    return v


def _int(value: str, lineno: int, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        v = _float(value, lineno, what)
        if v != int(v):
            raise DataError(f"{what} must be an integer, got {value!r}", lineno) from None
        return int(v)


def is_aggregated_header(header: list[str]) -> bool:
    return "population" in header and "cases" in header


def load_point_csv(path) -> PointDataset:
    """Read ``id,x,y,case[,cov1,...]``; covariates get an intercept column prepended."""
    header, rows = _read_rows(path)
    if "case" not in header:
        raise DataError("header lacks a 'case' column", 1)
    coord_cols = _coord_columns(header)
    case_col = header.index("case")
    id_col = header.index("id") if "id" in header else None
    used = set(coord_cols) | {case_col} | ({id_col} if id_col is not None else set())
    cov_cols = [k for k in range(len(header)) if k > case_col and k not in used]
    locs, cases, covs, ids = [], [], [], []
    for lineno, row in rows:
        locs.append([_float(row[k], lineno, "coordinate") for k in coord_cols])
        label = row[case_col]
        if label not in ("0", "1"):
            raise DataError(f"case label must be 0 or 1, got {label!r}", lineno)
        cases.append(int(label))
        if cov_cols:
            covs.append([1.0] + [_float(row[k], lineno, "covariate") for k in cov_cols])
        ids.append(row[id_col] if id_col is not None else str(len(ids)))
    return PointDataset(
        np.array(locs),
        np.array(cases),
        np.array(covs) if cov_cols else None,
        tuple(ids),
        tuple(header[k] for k in cov_cols),
    )


def load_aggregated_csv(path) -> AggregatedDataset:
    """Read ``id,x,y,cases,population`` rows."""
    header, rows = _read_rows(path)
    coord_cols = _coord_columns(header)
    if not is_aggregated_header(header):
        raise DataError("header needs 'cases' and 'population' columns", 1)
    ci, pi = header.index("cases"), header.index("population")
    id_col = header.index("id") if "id" in header else None
    cent, m, n, ids = [], [], [], []
    for lineno, row in rows:
        cent.append([_float(row[k], lineno, "coordinate") for k in coord_cols])
        mj = _int(row[ci], lineno, "cases")
        nj = _int(row[pi], lineno, "population")
        if nj < 1:
            raise DataError(f"population must be >= 1, got {nj}", lineno)
        if mj < 0 or mj > nj:
            raise DataError(f"cases ({mj}) must lie in [0, population={nj}]", lineno)
        m.append(mj)
        n.append(nj)
        ids.append(row[id_col] if id_col is not None else str(len(ids)))
    return AggregatedDataset(np.array(cent), np.array(m), np.array(n), tuple(ids))


def load_dataset(path) -> PointDataset | AggregatedDataset:
    """Load either CSV format, detected from the header columns."""
    header, _ = _read_rows(path)
    if is_aggregated_header(header):
        return load_aggregated_csv(path)
    return load_point_csv(path)


def point_csv_text(data: PointDataset) -> str:
    d = data.d
    coord_names = ["x", "y", "z"][:d] if d <= 3 else [f"x{k}" for k in range(1, d + 1)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", *coord_names, "case", *data.covariate_names])
    ids = data.ids or tuple(str(i) for i in range(data.J))
    for i in range(data.J):
        row = [ids[i], *(repr(float(v)) for v in data.locations[i]), int(data.cases[i])]
        if data.covariates is not None:
            row += [repr(float(v)) for v in data.covariates[i, 1:]]
        w.writerow(row)
    return buf.getvalue()


def write_point_csv(data: PointDataset, path) -> None:
    Path(path).write_text(point_csv_text(data), encoding="utf-8")


def write_aggregated_csv(agg: AggregatedDataset, path) -> None:
    d = agg.centroids.shape[1]
    coord_names = ["x", "y", "z"][:d] if d <= 3 else [f"x{k}" for k in range(1, d + 1)]
    ids = agg.ids or tuple(str(j) for j in range(agg.q))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *coord_names, "cases", "population"])
        for j in range(agg.q):
            w.writerow(
                [ids[j], *(repr(float(v)) for v in agg.centroids[j]),
                 int(agg.case_counts[j]), int(agg.populations[j])]
            )
