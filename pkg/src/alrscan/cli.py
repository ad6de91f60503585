"""Command-line front end: ``alrscan analyze`` and ``alrscan simulate``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import AggregatedDataset, DataError, load_dataset
from .gaussian import GaussianFieldError
from .likelihood import ScoreError
from .logistic import LogisticError, fit_logistic_null
from .pvalues import (
    PValueError,
    StatPipeline,
    chi2_pvalue,
    gdist_pvalue,
    permutation_pvalue,
    risk_adjusted_mc_pvalue,
)
from .replication import (
    ConfigError,
    load_config,
    run_example1,
    run_example2,
    run_power_study,
    run_qq_experiment,
    write_outputs,
)
from .stats import StatisticError
from .windows import (
    AllPairsCircles,
    ExplicitSets,
    FixedRadiusGrid,
    KnnCircles,
    WindowError,
    build_windows,
)

SCHEMA = 1
DEFAULT_L = 999


class UsageError(ValueError):
    """Invalid flag value; reported with exit status 2."""


def _options(body: str, flag: str) -> dict[str, str]:
    out = {}
    for item in filter(None, body.split(",")):
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"{flag}: expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _take(opts, key, conv, flag, default=None, required=False):
    if key not in opts:
        if required:
            raise UsageError(f"{flag}: missing {key}=")
        return default
    try:
        return conv(opts.pop(key))
    except ValueError:
        raise UsageError(f"{flag}: bad value for {key}") from None


def _no_leftovers(opts, flag):
    if opts:
        raise UsageError(f"{flag}: unknown option(s) {', '.join(sorted(opts))}")


def _domain(text: str):
    vals = [float(v) for v in text.split(":")]
    if len(vals) % 2 or not vals:
        raise ValueError
    return tuple((vals[i], vals[i + 1]) for i in range(0, len(vals), 2))


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise ValueError(text)


def parse_window_spec(text: str):
    """``grid:w=..,s=..,o=..,min=..`` | ``knn:jmax=..`` | ``allpairs:wmax=..`` | ``sets:<file>``."""
    flag = "--windows"
    kind, _, body = text.partition(":")
    if kind == "sets":
        if not body:
            raise UsageError("--windows sets: needs a file path")
        return ExplicitSets(_read_sets(body))
    opts = _options(body, flag)
    try:
        if kind == "grid":
            spec = FixedRadiusGrid(
                radius=_take(opts, "w", float, flag, required=True),
                spacing=_take(opts, "s", float, flag, 10.0),
                offset=_take(opts, "o", float, flag, 5.0),
                min_subjects=_take(opts, "min", int, flag, 0),
                domain=_take(opts, "domain", _domain, flag),
                contained=_take(opts, "inside", _bool, flag, True),
            )
        elif kind == "knn":
            spec = KnnCircles(
                max_rank=_take(opts, "jmax", int, flag, required=True),
                max_radius=_take(opts, "wmax", float, flag),
                min_rank=_take(opts, "minrank", int, flag, 1),
                unit=_take(opts, "unit", str, flag, "locations"),
            )
        elif kind == "allpairs":
            spec = AllPairsCircles(
                max_radius=_take(opts, "wmax", float, flag, required=True),
                unit=_take(opts, "unit", str, flag, "locations"),
            )
        else:
            raise UsageError(f"--windows: unknown window family {kind!r} (grid, knn, allpairs, sets)")
    except WindowError as e:
        raise UsageError(f"--windows: {e}") from None
    _no_leftovers(opts, flag)
    return spec


def _read_sets(path) -> list[list[int]]:
    """One window per line: 0-based subject row indices separated by commas or spaces."""
    sets = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"--windows sets: {e}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            sets.append([int(t) for t in line.replace(",", " ").split()])
        except ValueError:
            raise UsageError(f"--windows sets: line {lineno}: expected integer subject indices") from None
    if not sets:
        raise UsageError("--windows sets: no windows in file")
    return sets


def _read_weights(path) -> np.ndarray:
    try:
        tokens = Path(path).read_text(encoding="utf-8").split()
        return np.array([float(t) for t in tokens])
    except (OSError, ValueError) as e:
        raise UsageError(f"--stat walr weights: {e}") from None


def parse_stat(text: str) -> tuple[str, str | None]:
    kind, _, body = text.partition(":")
    if kind not in ("scan", "alr", "walr"):
        raise UsageError(f"--stat: unknown statistic {kind!r} (scan, alr, walr)")
    weights = None
    if kind == "walr":
        opts = _options(body, "--stat")
        weights = _take(opts, "weights", str, "--stat", required=True)
        _no_leftovers(opts, "--stat")
    elif body:
        raise UsageError(f"--stat {kind} takes no options")
    return kind, weights


def parse_pvalue(text: str) -> tuple[str, int | None]:
    method, _, body = text.partition(":")
    if method in ("chi2", "gdist"):
        if body:
            raise UsageError(f"--pvalue {method} takes no options")
        return method, None
    if method in ("perm", "risk"):
        opts = _options(body, "--pvalue")
        L = _take(opts, "L", int, "--pvalue", DEFAULT_L)
        _no_leftovers(opts, "--pvalue")
        if L < 1:
            raise UsageError("--pvalue: L must be >= 1")
        return method, L
    raise UsageError(f"--pvalue: unknown method {method!r} (chi2, gdist, perm, risk)")


def _window_record(ws, b) -> dict:
    rec = ws.describe(b)
    return rec


def analyze(args) -> dict:
    started = time.perf_counter()
    spec = parse_window_spec(args.windows)
    kind, weight_path = parse_stat(args.stat)
    requests = [parse_pvalue(p) for p in args.pvalue]
    methods = [m for m, _ in requests]
    dup = sorted({m for m in methods if methods.count(m) > 1})
    if dup:
        raise UsageError(f"--pvalue: method(s) requested more than once: {', '.join(dup)}")
    k = 1 if args.alt == "one" else 2
    if kind == "scan" and {"chi2", "gdist"} & set(methods):
        raise UsageError("--pvalue chi2/gdist approximate the ALR tail; use perm or risk with --stat scan")
    if "risk" in methods:
        if args.covariates == "off":
            raise UsageError("--pvalue risk needs covariate adjustment (--covariates on or quadratic)")
        if k != 2:
            raise UsageError("--pvalue risk is two-sided; use --alt two")

    try:
        loaded = load_dataset(args.data)
    except OSError as e:
        raise UsageError(f"--data: {e}") from None
    fmt = "aggregated" if isinstance(loaded, AggregatedDataset) else "point"
    data = loaded.expand() if isinstance(loaded, AggregatedDataset) else loaded
    if args.covariates != "off" and data.covariates is None:
        raise UsageError(f"--covariates {args.covariates}: the data file has no covariate columns")
    if args.standardize:
        if data.covariates is None:
            raise UsageError("--standardize: the data file has no covariate columns")
        data = data.standardized()
    if not 0 < data.I < data.J:
        raise UsageError("--data: need at least one case and one control")

    ws = build_windows(data, spec)
    if ws.N == 0:
        raise UsageError("--windows: the window family is empty for this data")
    weights = None
    if weight_path is not None:
        weights = _read_weights(weight_path)
    pipeline = StatPipeline(kind, k, args.covariates, weights)

    fit0 = fit_logistic_null(data) if args.covariates != "off" else None
    scores = pipeline.scores(data, ws, fit0)
    stat = pipeline.reduce(scores)
    stat_rec = stat.to_dict()
    if stat.argmax is not None:
        stat_rec["argmax_window"] = _window_record(ws, stat.argmax)

    results = []
    for method, L in requests:
        if method == "chi2":
            results.append(chi2_pvalue(stat.value, k))
        elif method == "gdist":
            results.append(gdist_pvalue(stat.value, k))
        elif method == "perm":
            results.append(permutation_pvalue(data, ws, pipeline, L, args.seed, args.threads,
                                              observed=stat.value))
        else:
            results.append(risk_adjusted_mc_pvalue(data, ws, fit0, L, args.seed, args.threads))

    report = {
        "schema": SCHEMA,
        "tool": "alrscan",
        "version": __version__,
        "command": "analyze",
        "data": {
            "path": str(args.data), "format": fmt, "J": data.J, "I": data.I, "p0": data.p0,
            "d": data.d, "covariates": list(data.covariate_names),
        },
        "windows": {"spec": args.windows, "N": ws.N, "sites": ws.q},
        "covariates": args.covariates,
        "standardize": bool(args.standardize),
        "statistic": stat_rec,
        "pvalues": [r.to_dict() for r in results],
        "seed": args.seed,
    }
    if scores.flagged is not None and len(scores.flagged):
        report["fallback_windows"] = [int(b) for b in scores.flagged]
    if args.dump_windows:
        Path(args.dump_windows).write_text(ws.provenance_tsv(), encoding="utf-8")
    if args.timing:
        report["timing_seconds"] = time.perf_counter() - started
    return report


RUNNERS = {
    "example1": run_example1,
    "example2": run_example2,
    "qq": run_qq_experiment,
}


def simulate(args) -> dict:
    overrides = {} if args.seed is None else {"seed": args.seed}
    cfg = load_config(args.experiment, args.config, overrides)
    if args.experiment == "power":
        result = run_power_study(cfg, threads=args.threads)
    else:
        result = RUNNERS[args.experiment](cfg, threads=args.threads)
    paths = write_outputs(result, args.out)
    return {"schema": SCHEMA, "tool": "alrscan", "version": __version__, "command": "simulate",
            "experiment": args.experiment, "outputs": [str(p) for p in paths]}


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _threads(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alrscan", description="Spatial scan and average likelihood ratio cluster tests.")
    p.add_argument("--version", action="version", version=f"alrscan {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="test one dataset for spatial clustering")
    a.add_argument("--data", required=True, help="point CSV (id,x,y,case[,covariates]) or aggregated CSV (id,x,y,cases,population)")
    a.add_argument("--windows", required=True, help="grid:w=40,s=10,o=5,min=2 | knn:jmax=10 | allpairs:wmax=20 | sets:<file>")
    a.add_argument("--stat", default="alr", help="scan | alr | walr:weights=<file> (default alr)")
    a.add_argument("--alt", choices=("one", "two"), default="two", help="one-sided (elevated risk) or two-sided")
    a.add_argument("--pvalue", action="append", default=[], help="chi2 | gdist | perm:L=999 | risk:L=999 (repeatable)")
    a.add_argument("--covariates", choices=("off", "on", "quadratic"), default="off")
    a.add_argument("--standardize", action="store_true", help="centre and scale covariate columns before fitting")
    a.add_argument("--seed", type=_seed, default=0)
    a.add_argument("--threads", type=_threads, default=None)
    a.add_argument("--out", help="write the JSON report here instead of stdout")
    a.add_argument("--dump-windows", metavar="TSV", help="write window provenance (centre, radius, n_B, m_B)")
    a.add_argument("--timing", action="store_true", help="include wall-clock time in the report")

    s = sub.add_parser("simulate", help="run a simulation study")
    s.add_argument("--experiment", required=True, help="example1 | example2 | qq | power")
    s.add_argument("--config", help="JSON config file (keys default when omitted)")
    s.add_argument("--seed", type=_seed, default=None, help="overrides the config seed")
    s.add_argument("--threads", type=_threads, default=None)
    s.add_argument("--out", default=".", help="output directory")
    return p


ERRORS = (UsageError, DataError, WindowError, StatisticError, PValueError, ConfigError,
          LogisticError, ScoreError, GaussianFieldError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            report = analyze(args)
            text = json.dumps(report, indent=2) + "\n"
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
        else:
            if args.experiment not in ("example1", "example2", "qq", "power"):
                raise UsageError(f"--experiment: unknown experiment {args.experiment!r}")
            summary = simulate(args)
            sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    except ERRORS as e:
        print(f"alrscan: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
