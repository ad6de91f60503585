#!/usr/bin/env python3
"""Null U statistics against chi-square and G quantiles, one TSV per site count."""

import time
from pathlib import Path

from _common import overrides, parser

from alrscan.replication import load_config, run_qq_experiment, write_outputs


def main():
    p = parser(__doc__, "qq_gaussian.json")
    p.add_argument("--n", type=int, nargs="+", default=[10, 100], help="site counts to simulate")
    p.add_argument("--mode", choices=("gaussian", "bernoulli"), default=None)
    p.add_argument("--data", default=None, help="aggregated CSV for bernoulli mode")
    p.add_argument("--L", type=int, default=None)
    args = p.parse_args()
    for n in args.n:
        cfg = load_config("qq", args.config, overrides(args, n=n, mode=args.mode, data=args.data, L=args.L))
        started = time.perf_counter()
        res = run_qq_experiment(cfg, threads=args.threads)
        out = Path(args.out) / f"qq_{cfg.mode}_n{n}"
        write_outputs(res, out)
        err = res["fit_error"]
        print(f"n={n} N={res['N']} mean |quantile gap| on [0.9, 0.999]: "
              f"chi2 {err['chi2']:.3f}, G {err['g']:.3f} ({time.perf_counter() - started:.1f}s) -> {out}")


if __name__ == "__main__":
    main()
