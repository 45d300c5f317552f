"""Bound and simulated mean against load, as CSV plus a self-rendered SVG.

    python3 scripts/bound_curve.py --model tsc --rho-grid 0.5,0.7,0.8,0.9,0.95
"""

import argparse
import sys

from roq.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default="tsc", choices=("tsc", "mcss"))
    ap.add_argument("--rho-grid", default="0.5,0.6,0.7,0.8,0.9,0.95")
    ap.add_argument("--replications", default="20")
    ap.add_argument("--jobs", default="2000")
    ap.add_argument("--horizon", default="5000")
    ap.add_argument("--seed", default="0")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    out = args.out or f"out/curve_{args.model}"
    argv = ["curve", "--model", args.model, "--rho-grid", args.rho_grid, "--replications", args.replications,
            "--seed", args.seed, "--out", out]
    argv += ["--jobs", args.jobs] if args.model == "tsc" else ["--horizon", args.horizon]
    sys.exit(main(argv))
