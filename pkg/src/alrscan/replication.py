"""Simulation studies: covariate-adjusted type I error and power, qq data, power of U vs M.

Every study is a pure function of its config (including the master seed).
Replicate ``l`` of setting ``t`` draws from ``stream(seed, stage, t, l)``, so
tables do not depend on the number of worker threads.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .data import AggregatedDataset, PointDataset, load_aggregated_csv, load_point_csv
from .gaussian import simulate_uz
from .likelihood import glr_from_counts
from .logistic import LogisticError, fit_logistic_null, quadratic_window_scores, refit_window_scores
from .pvalues import (
    StatPipeline,
    chi2_pvalue,
    chi2_quantile,
    g_quantile,
    permutation_values,
    risk_adjusted_mc_pvalue,
)
from .stats import alr_statistic, alr_values, scan_values
from .windows import (
    AllPairsCircles,
    ExplicitSets,
    FixedRadiusGrid,
    KnnCircles,
    build_windows,
    recount_cases,
    restrict,
)


class ConfigError(ValueError):
    pass


@dataclass
class Example1Config:
    """Three blocks of subjects; covariate mean shifted in the first block only."""

    thetas: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6)
    beta1: float = -3.0
    block_size: int = 1000
    covariate_shift: float = 1.0
    replicates: int = 1000
    mc_L: int = 999
    alphas: tuple[float, ...] = (0.05, 0.01)
    score_path: str = "refit"
    seed: int = 1


@dataclass
class Example2Config:
    """Random sites in the unit square, elevated risk inside a central circle."""

    p1s: tuple[float, ...] = (0.05, 0.2, 0.4, 0.6)
    p0: float = 0.05
    n_locations: int = 20
    per_location: int = 50
    radius: float = 0.3
    center: tuple[float, float] = (0.5, 0.5)
    max_rank: int = 10
    covariate_shift: float = 1.0
    replicates: int = 1000
    mc_L: int = 999
    alphas: tuple[float, ...] = (0.05, 0.01)
    score_path: str = "refit"
    seed: int = 1


@dataclass
class QQConfig:
    """Null draws of U for qq comparison with chi-square and G quantiles.

    ``mode="gaussian"``: U_Z over all-pairs circles on ``n`` uniform sites.
    ``mode="bernoulli"``: U over all-pairs circles of aggregated data (``data``
    CSV, or ``n`` synthetic sites of ``population`` subjects each), with
    site counts drawn Binomial(n_j, I/J).
    """

    mode: str = "gaussian"
    n: int = 100
    max_radius: float = 0.2
    L: int = 10000
    k: int = 2
    data: str | None = None
    population: int = 200
    p0: float = 0.05
    seed: int = 1


@dataclass
class PowerConfig:
    """Power of U and M against single-circle clusters with the total case count fixed.

    ``circles`` is a list of ``{"center": [x, y], "rr": RR}`` rows.  Windows
    are the fixed-radius grid family ``grid_radius/spacing/offset``.  Critical
    values not supplied are estimated from ``null_L`` label permutations.
    """

    data: str | None = None
    circles: list = field(default_factory=list)
    radius: float = 40.0
    grid_radius: float = 40.0
    spacing: float = 10.0
    offset: float = 5.0
    min_subjects: int = 2
    domain: list | None = None
    k: int = 1
    alpha: float = 0.01
    critical_u: float | None = None
    critical_m: float | None = None
    null_L: int = 1000
    replicates: int = 1000
    seed: int = 1


CONFIGS = {
    "example1": Example1Config,
    "example2": Example2Config,
    "qq": QQConfig,
    "power": PowerConfig,
}
REQUIRED = {"power": ("data", "circles")}


def load_config(experiment: str, path=None, overrides: dict | None = None):
    """Config for ``experiment`` from a JSON object file; unknown or missing keys raise."""
    if experiment not in CONFIGS:
        raise ConfigError(f"unknown experiment {experiment!r} (choose from {', '.join(CONFIGS)})")
    cls = CONFIGS[experiment]
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    raw.update(overrides or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown config key(s) for {experiment}: {', '.join(unknown)}")
    missing = [k for k in REQUIRED.get(experiment, ()) if raw.get(k) in (None, [], "")]
    if missing:
        raise ConfigError(f"missing config key(s) for {experiment}: {', '.join(missing)}")
    for k, v in raw.items():
        if isinstance(v, list) and k not in ("circles", "domain"):
            raw[k] = tuple(v)
    cfg = cls(**raw)
    _validate(experiment, cfg)
    return cfg


def _validate(experiment, cfg):
    counts = [v for k, v in dataclasses.asdict(cfg).items()
              if k in ("replicates", "mc_L", "L", "null_L", "n", "n_locations", "per_location", "block_size")]
    if any(int(c) < 1 for c in counts):
        raise ConfigError("replicate and size counts must be >= 1")
    probs = []
    if experiment == "example2":
        probs = [cfg.p0, *cfg.p1s]
    if experiment == "qq":
        probs = [cfg.p0]
        if cfg.mode not in ("gaussian", "bernoulli"):
            raise ConfigError(f"unknown qq mode {cfg.mode!r}")
    if any(not 0.0 <= p <= 1.0 for p in probs):
        raise ConfigError("probabilities must lie in [0, 1]")
    for a in getattr(cfg, "alphas", ()):
        if not 0.0 < a < 1.0:
            raise ConfigError("significance levels must lie in (0, 1)")
    if getattr(cfg, "score_path", "refit") not in ("refit", "quadratic"):
        raise ConfigError("score_path must be 'refit' or 'quadratic'")


def _sub_seed(g: np.random.Generator) -> int:
    return int(g.integers(0, 2 ** 63 - 1))


def _rate(flags) -> tuple[float, float]:
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return float("nan"), float("nan")
    p = float(flags.mean())
    return p, math.sqrt(p * (1.0 - p) / flags.size)


def _adjusted_alr(data, ws, fit0, score_path):
    if score_path == "quadratic":
        scores = quadratic_window_scores(data, ws, fit0, 2, degenerate="zero")
    else:
        scores = refit_window_scores(data, ws, fit0, 2)
    return alr_statistic(scores).value, len(scores.flagged)


def _covariate_study_row(results, alphas):
    ok = [r for r in results if r is not None]
    row, ses = {}, {}
    for a in alphas:
        for name, key in (("mc", "p_mc"), ("alr", "p_alr")):
            rate, se = _rate([r[key] <= a for r in ok])
            row[f"{name}_{a:g}"] = rate
            ses[f"{name}_{a:g}"] = se
    return row, ses, len(results) - len(ok), sum(r["flagged"] for r in ok)


# ---------------------------------------------------------------- example 1


def example1_layout(cfg: Example1Config):
    """Frozen covariates and the three-block design (blocks at distinct sites)."""
    nb = cfg.block_size
    g = rngmod.stream(cfg.seed, 10)
    in_b1 = np.arange(3 * nb) < nb
    u = g.standard_normal(3 * nb) + cfg.covariate_shift * in_b1
    locations = np.repeat(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), nb, axis=0)
    sets = [range(0, nb), range(nb, 2 * nb), range(2 * nb, 3 * nb)]
    return locations, u, in_b1, ExplicitSets(sets)


def _example1_replicate(cfg, locations, U, in_b1, spec, t, theta, rep):
    g = rngmod.stream(cfg.seed, 11, t, rep)
    prob = 1.0 / (1.0 + np.exp(-cfg.beta1 - theta * in_b1))
    cases = (g.random(prob.size) < prob).astype(np.int64)
    data = PointDataset(locations, cases, U)
    ws = build_windows(data, spec)
    try:
        fit0 = fit_logistic_null(data)
    except LogisticError:
        return None
    u_val, flagged = _adjusted_alr(data, ws, fit0, cfg.score_path)
    mc = risk_adjusted_mc_pvalue(data, ws, fit0, cfg.mc_L, _sub_seed(g), threads=1)
    return {"U": u_val, "p_alr": chi2_pvalue(u_val, 2).p, "M": mc.statistic, "p_mc": mc.p,
            "flagged": flagged}


def run_example1(cfg: Example1Config, threads: int | None = None) -> dict:
    """Rejection rates of the risk-adjusted MC scan test and the chi-square ALR test."""
    locations, u, in_b1, spec = example1_layout(cfg)
    U = np.column_stack([np.ones(u.size), u])
    rows, ses, failures, flagged = [], [], [], []
    for t, theta in enumerate(cfg.thetas):
        res = rngmod.map_ordered(
            lambda rep: _example1_replicate(cfg, locations, U, in_b1, spec, t, theta, rep),
            range(cfg.replicates), threads,
        )
        row, se, fails, flg = _covariate_study_row(res, cfg.alphas)
        rows.append({"theta": theta, **row})
        ses.append(se)
        failures.append(fails)
        flagged.append(flg)
    return {"experiment": "example1", "config": dataclasses.asdict(cfg), "rows": rows,
            "se": ses, "fit_failures": failures, "fallback_windows": flagged}


# ---------------------------------------------------------------- example 2


def example2_dataset(cfg: Example2Config, p1: float, g: np.random.Generator) -> PointDataset:
    sites = g.random((cfg.n_locations, 2))
    inside = np.sum((sites - np.asarray(cfg.center)) ** 2, axis=1) <= cfg.radius ** 2
    inside_s = np.repeat(inside, cfg.per_location)
    locations = np.repeat(sites, cfg.per_location, axis=0)
    u = g.standard_normal(inside_s.size) + cfg.covariate_shift * inside_s
    prob = np.where(inside_s, p1, cfg.p0)
    cases = (g.random(prob.size) < prob).astype(np.int64)
    return PointDataset(locations, cases, np.column_stack([np.ones(u.size), u]))


def _example2_replicate(cfg, t, p1, rep):
    g = rngmod.stream(cfg.seed, 21, t, rep)
    data = example2_dataset(cfg, p1, g)
    if not 0 < data.I < data.J:
        return None
    ws = build_windows(data, KnnCircles(cfg.max_rank))
    try:
        fit0 = fit_logistic_null(data)
    except LogisticError:
        return None
    u_val, flagged = _adjusted_alr(data, ws, fit0, cfg.score_path)
    mc = risk_adjusted_mc_pvalue(data, ws, fit0, cfg.mc_L, _sub_seed(g), threads=1)
    return {"U": u_val, "p_alr": chi2_pvalue(u_val, 2).p, "M": mc.statistic, "p_mc": mc.p,
            "flagged": flagged}


def run_example2(cfg: Example2Config, threads: int | None = None) -> dict:
    """Unconditional rejection rates; sites are redrawn in every replicate."""
    rows, ses, failures, flagged = [], [], [], []
    for t, p1 in enumerate(cfg.p1s):
        res = rngmod.map_ordered(
            lambda rep: _example2_replicate(cfg, t, p1, rep), range(cfg.replicates), threads
        )
        row, se, fails, flg = _covariate_study_row(res, cfg.alphas)
        rows.append({"p1": p1, **row})
        ses.append(se)
        failures.append(fails)
        flagged.append(flg)
    return {"experiment": "example2", "config": dataclasses.asdict(cfg), "rows": rows,
            "se": ses, "fit_failures": failures, "fallback_windows": flagged}


# ---------------------------------------------------------------- qq


def gaussian_qq_windows(cfg: QQConfig):
    g = rngmod.stream(cfg.seed, 30)
    sites = g.random((cfg.n, 2))
    data = PointDataset(sites, np.zeros(cfg.n, dtype=np.int64))
    ws = build_windows(data, AllPairsCircles(cfg.max_radius))
    sizes = ws.site_counts
    return restrict(ws, (sizes > 0) & (sizes < ws.q))


def _bernoulli_qq_values(cfg: QQConfig, threads):
    if cfg.data is not None:
        agg = load_aggregated_csv(cfg.data)
    else:
        g = rngmod.stream(cfg.seed, 31)
        sites = g.random((cfg.n, 2))
        pop = np.full(cfg.n, cfg.population)
        agg = AggregatedDataset(sites, g.binomial(pop, cfg.p0), pop)
    data = agg.expand()
    ws = build_windows(data, AllPairsCircles(cfg.max_radius))
    J = data.J
    p0 = data.p0 if cfg.data is not None else cfg.p0
    pops = ws.site_sizes

    def run(t):
        b, _, count = t
        g = rngmod.stream(cfg.seed, 32, b)
        out = np.empty(count)
        for c in range(count):
            while True:
                site_m = g.binomial(pops, p0)
                I = int(site_m.sum())  # noqa: E741
                if 0 < I < J:
                    break
            s = glr_from_counts(ws.n, np.rint(ws.window_sums(site_m)), I, J, cfg.k)
            out[c] = alr_values(s)
        return out

    return np.concatenate(rngmod.map_ordered(run, rngmod.blocks(cfg.L), threads))


def run_qq_experiment(cfg: QQConfig, threads: int | None = None) -> dict:
    """Sorted null statistics with chi-square and G quantiles at ``(l - 0.5)/L``."""
    if cfg.mode == "gaussian":
        ws = gaussian_qq_windows(cfg)
        u1, u2 = simulate_uz(ws, cfg.L, cfg.seed, threads)
        values = u2 if cfg.k == 2 else u1
        N = ws.N
    else:
        values = _bernoulli_qq_values(cfg, threads)
        N = None
    values = np.sort(values)
    pos = (np.arange(1, cfg.L + 1) - 0.5) / cfg.L
    qq = np.column_stack([values, chi2_quantile(pos), g_quantile(pos)])
    return {"experiment": "qq", "config": dataclasses.asdict(cfg), "N": N, "qq": qq,
            "fit_error": qq_fit_errors(qq, pos)}


def qq_fit_errors(qq: np.ndarray, pos: np.ndarray, lo: float = 0.9, hi: float = 0.999) -> dict:
    """Mean absolute gap between empirical and theoretical quantiles over ``[lo, hi]``."""
    band = (pos >= lo) & (pos <= hi)
    return {
        "chi2": float(np.mean(np.abs(qq[band, 0] - qq[band, 1]))),
        "g": float(np.mean(np.abs(qq[band, 0] - qq[band, 2]))),
        "band": [lo, hi],
    }


# ---------------------------------------------------------------- power


def solve_cluster_probs(n: int, J: int, I: int, rr: float) -> tuple[float, float]:  # noqa: E741
    """``(p, p_out)`` with ``p = rr * p_out`` and ``n p + (J - n) p_out = I``."""
    if not 0 <= n <= J or rr <= 0:
        raise ConfigError("need 0 <= n <= J and RR > 0")
    p_out = I / (n * rr + (J - n))
    p = rr * p_out
    if p > 1.0:
        raise ConfigError(f"infeasible: RR={rr} with n={n} gives p={p:.4g} > 1")
    return p, p_out


def _labels_with_total(g, prob, I):  # noqa: E741
    while True:
        x = (g.random(prob.size) < prob).astype(np.float64)
        if int(x.sum()) == I:
            return x


def run_power_study(cfg: PowerConfig, data: PointDataset | None = None, threads: int | None = None) -> dict:
    """Power of the ALR and scan statistics against single-circle clusters."""
    if data is None:
        if cfg.data is None:
            raise ConfigError("missing config key(s) for power: data")
        data = load_point_csv(cfg.data)
    domain = None if cfg.domain is None else tuple(tuple(b) for b in cfg.domain)
    spec = FixedRadiusGrid(cfg.grid_radius, cfg.spacing, cfg.offset, cfg.min_subjects, domain)
    ws = build_windows(data, spec)
    J, I = data.J, data.I  # noqa: E741
    k = cfg.k
    crit_u, crit_m = cfg.critical_u, cfg.critical_m
    null = {}
    if crit_u is None or crit_m is None:
        seed = _sub_seed(rngmod.stream(cfg.seed, 40))
        vu, _ = permutation_values(data, ws, StatPipeline("alr", k), cfg.null_L, seed, threads)
        vm, _ = permutation_values(data, ws, StatPipeline("scan", k), cfg.null_L, seed, threads)
        q = 1.0 - cfg.alpha
        if crit_u is None:
            crit_u = float(np.quantile(vu, q, method="higher"))
        if crit_m is None:
            crit_m = float(np.quantile(vm, q, method="higher"))
        null = {"null_L": cfg.null_L}
    rows = []
    for t, row in enumerate(cfg.circles):
        center = np.asarray(row["center"], dtype=np.float64)
        rr = float(row["rr"])
        inside = np.sum((data.locations - center) ** 2, axis=1) <= cfg.radius ** 2
        n = int(inside.sum())
        p, p_out = solve_cluster_probs(n, J, I, rr)
        prob = np.where(inside, p, p_out)

        def run(rep, t=t, prob=prob):
            g = rngmod.stream(cfg.seed, 41, t, rep)
            x = _labels_with_total(g, prob, I)
            s = glr_from_counts(ws.n, recount_cases(ws, x), I, J, k)
            return float(alr_values(s)), float(scan_values(s))

        vals = np.array(rngmod.map_ordered(run, range(cfg.replicates), threads))
        pu, su = _rate(vals[:, 0] >= crit_u)
        pm, sm = _rate(vals[:, 1] >= crit_m)
        rows.append({"center": center.tolist(), "n": n, "rr": rr, "p": p, "p_out": p_out,
                     "power_u": pu, "se_u": su, "power_m": pm, "se_m": sm})
    return {"experiment": "power", "config": dataclasses.asdict(cfg), "N": ws.N,
            "critical_u": crit_u, "critical_m": crit_m, **null, "rows": rows}


# ---------------------------------------------------------------- output


def write_outputs(result: dict, out_dir) -> list[Path]:
    """TSV table plus JSON summary; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = result["experiment"]
    paths = []
    summary = {k: v for k, v in result.items() if k != "qq"}
    if name == "qq":
        tsv = out / "qq.tsv"
        lines = ["statistic\tchi2_quantile\tg_quantile"]
        lines += ["\t".join(f"{v:.10g}" for v in row) for row in result["qq"]]
        tsv.write_text("\n".join(lines) + "\n", encoding="utf-8")
        summary["rows"] = int(result["qq"].shape[0])
    else:
        rows = result["rows"]
        cols = [c for c in rows[0] if c != "center"] if rows else []
        if rows and "center" in rows[0]:
            cols = ["center"] + cols
        lines = ["\t".join(cols)]
        for r in rows:
            cells = []
            for c in cols:
                v = r[c]
                cells.append(",".join(f"{x:g}" for x in v) if isinstance(v, list) else f"{v:.6g}")
            lines.append("\t".join(cells))
        tsv = out / f"{name}.tsv"
        tsv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths.append(tsv)
    js = out / f"{name}.json"
    js.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n",
                  encoding="utf-8")
    paths.append(js)
    return paths


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
