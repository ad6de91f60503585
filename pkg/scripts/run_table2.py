#!/usr/bin/env python3
"""Unconditional type I error and power with random sites and one elevated-risk circle."""

import time

from _common import finish, overrides, parser

from alrscan.replication import load_config, run_example2


def main():
    p = parser(__doc__, "example2.json")
    p.add_argument("--score-path", choices=("refit", "quadratic"), default=None)
    p.add_argument("--null-calibration", action="store_true",
                   help="p1 = p0 and no covariate shift anywhere")
    args = p.parse_args()
    extra = {"score_path": args.score_path}
    if args.null_calibration:
        extra.update(p1s=(0.05,), covariate_shift=0.0)
    cfg = load_config("example2", args.config, overrides(args, **extra))
    started = time.perf_counter()
    finish(run_example2(cfg, threads=args.threads), args.out, started)


if __name__ == "__main__":
    main()
