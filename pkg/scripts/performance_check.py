"""Wall-clock check for a 20-variable panel: one full fit plus a recursive
forecast exercise, driven through the CLI pipeline in a scratch directory.

    python scripts/performance_check.py --N 5 --M 4 --T 200 --origins 12
"""

import argparse
import json
import os
import tempfile
import time
from pathlib import Path

import numpy as np
import yaml

from pvar_irga.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=5)
    ap.add_argument("--M", type=int, default=4)
    ap.add_argument("--T", type=int, default=200)
    ap.add_argument("--origins", type=int, default=12)
    ap.add_argument("--n-burn", type=int, default=1000)
    ap.add_argument("--n-save", type=int, default=2000)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--seed", type=int, default=10)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cli(["simulate", "--out", str(tmp), "--N", str(args.N), "--M", str(args.M), "--T", str(args.T),
             "--seed", str(args.seed)])
        cfg = yaml.safe_load((tmp / "config.yaml").read_text())
        cfg["mcmc"] = {"n_burn": args.n_burn, "n_save": args.n_save}
        cfg["forecast"] = {"horizon": 12, "initial": args.T - args.origins, "last": args.T - 1}
        cfg["threads"] = args.threads
        (tmp / "config.yaml").write_text(yaml.safe_dump(cfg))

        timings = {}
        for command in ("estimate", "forecast"):
            start = time.perf_counter()
            code = cli([command, "--config", str(tmp / "config.yaml")])
            timings[command] = time.perf_counter() - start
            if code:
                raise SystemExit(f"{command} exited with {code}")

        iters = [int(np.load(f)["approx"][3]) for f in (tmp / "run" / "fits").glob("*/eq_*.npz")]
        manifest = json.loads((tmp / "run" / "manifest.json").read_text())

    print(f"n={args.N * args.M} T={args.T} origins={len(manifest['forecast']['origins'])} "
          f"threads={args.threads} cpus={os.cpu_count()}")
    print(f"estimate {timings['estimate']:.1f}s, forecast {timings['forecast']:.1f}s, "
          f"total {sum(timings.values()):.1f}s")
    print(f"VAMP iterations: median {np.median(iters):.0f}, max {max(iters)}, "
          f"share < 500: {np.mean(np.array(iters) < 500):.1%}")


if __name__ == "__main__":
    main()
