"""Tandem validation campaign: exponential J=2 tandem at rho* = 0.8.

    python3 scripts/run_tsc_campaign.py [--replications 200] [--jobs 5000] [--out out/tsc]
"""

import argparse
import json
import sys
import tempfile

from roq.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--replications", default="200")
    ap.add_argument("--jobs", default="5000")
    ap.add_argument("--seed", default="0")
    ap.add_argument("--out", default="out/tsc")
    args = ap.parse_args()
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump({"J": 2, "n": int(args.jobs), "lambda": 1.0, "mu": [1.25, 1.25]}, fh)
    sys.exit(main(["validate", "--model", "tsc", "--instance", fh.name, "--replications", args.replications,
                   "--jobs", args.jobs, "--seed", args.seed, "--out", args.out]))
