"""Multiclass validation campaign: two classes in a 1 -> 2 chain at rho = 0.6.

Checks busy-period and peak-workload dominance on every completed busy period
and the arrival-count inequalities at 20 admissible times per path.

    python3 scripts/run_mcss_campaign.py [--replications 200] [--horizon 1e4] [--policy fifo]
"""

import argparse
import json
import sys
import tempfile

from roq.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--replications", default="200")
    ap.add_argument("--horizon", default="1e4")
    ap.add_argument("--seed", default="0")
    ap.add_argument("--policy", default="fifo")
    ap.add_argument("--out", default="out/mcss")
    args = ap.parse_args()
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump({"J": 2, "lambda": [0.3, 0.0], "mu": [1.0, 1.0], "P": [[0, 1], [0, 0]]}, fh)
    sys.exit(main(["validate", "--model", "mcss", "--instance", fh.name, "--replications", args.replications,
                   "--horizon", args.horizon, "--seed", args.seed, "--policy", args.policy,
                   "--out", args.out]))
