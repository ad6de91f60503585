#!/usr/bin/env python3
"""Power of U and M against single-circle clusters with the total case count fixed.

Needs a point CSV (id,x,y,case); pass --data or set "data" in the config.
Omit critical_u/critical_m from the config to estimate them by permutation.
"""

import sys
import time
from pathlib import Path

from _common import finish, overrides, parser

from alrscan.replication import load_config, run_power_study


def main():
    p = parser(__doc__, "power_laryngeal.json")
    p.add_argument("--data", default=None)
    args = p.parse_args()
    cfg = load_config("power", args.config, overrides(args, data=args.data))
    if not Path(cfg.data).exists():
        sys.exit(f"data file not found: {cfg.data} (pass --data)")
    started = time.perf_counter()
    finish(run_power_study(cfg, threads=args.threads), args.out, started)


if __name__ == "__main__":
    main()
