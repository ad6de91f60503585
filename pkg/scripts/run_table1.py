#!/usr/bin/env python3
"""Covariate-adjusted type I error and power with three blocks of subjects."""

import time

from _common import finish, overrides, parser

from alrscan.replication import load_config, run_example1


def main():
    p = parser(__doc__, "example1.json")
    p.add_argument("--no-covariate-effect", action="store_true",
                   help="draw every covariate from N(0, 1) (pure calibration run)")
    args = p.parse_args()
    extra = {"covariate_shift": 0.0} if args.no_covariate_effect else {}
    cfg = load_config("example1", args.config, overrides(args, **extra))
    started = time.perf_counter()
    finish(run_example1(cfg, threads=args.threads), args.out, started)


if __name__ == "__main__":
    main()
