"""Shared argument handling for the experiment scripts."""

import argparse
import json
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def parser(description, default_config=None):
    p = argparse.ArgumentParser(description=description)
    if default_config is not None:
        p.add_argument("--config", default=str(ROOT / "configs" / default_config))
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=str(ROOT / "results"))
    p.add_argument("--replicates", type=int, default=None, help="override the replicate count")
    return p


def overrides(args, **extra):
    out = {k: v for k, v in extra.items() if v is not None}
    if args.seed is not None:
        out["seed"] = args.seed
    if getattr(args, "replicates", None) is not None:
        out["replicates"] = args.replicates
    return out


def finish(result, out_dir, started):
    from alrscan.replication import write_outputs

    paths = write_outputs(result, out_dir)
    for row in result.get("rows", []):
        print("  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    print(f"wrote {', '.join(map(str, paths))} in {time.perf_counter() - started:.1f}s", file=sys.stderr)


def dump(obj):
    print(json.dumps(obj, indent=2))
