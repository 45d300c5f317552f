"""Command-line front end.

Exit codes: 0 ok, 1 runtime error, 2 precondition violation (or usage error),
3 dominance violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import campaign
from . import multiclass as mc
from .errors import PreconditionError, RoqError
from .simkit import DistSpec, threads_from_env
from .tandem import TscInstance, sojourn_bound

log = logging.getLogger("roq")

EXIT_OK, EXIT_RUNTIME, EXIT_PRECONDITION, EXIT_VIOLATION = 0, 1, 2, 3


@dataclass
class RunConfig:
    command: str
    model: str = "tsc"
    instance: Path | None = None
    replications: int = 200
    horizon: float = 1e4
    jobs: int | None = None
    seed: int = 0
    rho_grid: list = field(default_factory=list)
    out: Path = Path("out")
    tamper: bool = False
    policy: str = "fifo"
    arrivals: list | dict | None = None  # distribution dicts, see DistSpec.from_dict
    services: list | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.model not in ("tsc", "mcss"):
            raise ValueError(f"model must be tsc or mcss, got {self.model!r}")
        if self.instance is not None:
            self.instance = Path(self.instance)
            if not self.instance.is_file():
                raise FileNotFoundError(f"instance file {self.instance} not found")
        self.out = Path(self.out)
        if self.replications < 0:
            raise ValueError("replications must be nonnegative")

    def load_instance(self):
        if self.model == "tsc":
            if self.instance is None:
                inst = TscInstance(J=2, n=1000, lam=1.0, mu=(1.25, 1.25))
            else:
                inst = TscInstance.from_json(self.instance)
            if self.jobs is not None:
                d = inst.to_dict()
                d["n"] = int(self.jobs)
                inst = TscInstance.from_dict(d)
            return inst
        if self.instance is None:
            return mc.McssInstance(J=2, lam=(0.3, 0.0), mu=(1.0, 1.0), P=((0, 1), (0, 0)))
        return mc.McssInstance.from_json(self.instance)

    def dists(self):
        arr = self.arrivals
        if isinstance(arr, dict):
            arr = DistSpec.from_dict(arr)
        elif isinstance(arr, list):
            arr = [DistSpec.from_dict(a) if a else None for a in arr]
        srv = [DistSpec.from_dict(s) for s in self.services] if self.services else None
        return arr, srv


def _parse_grid(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roq", description="Robust bounds and simulation campaigns for "
                                "tandem and multiclass single-server queues.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", choices=("tsc", "mcss"), default=None)
    common.add_argument("--instance", type=Path, help="instance JSON file")
    common.add_argument("--config", type=Path, help="JSON file with defaults for any option")
    common.add_argument("--replications", type=int)
    common.add_argument("--horizon", type=float, help="simulation horizon (mcss)")
    common.add_argument("--jobs", type=int, help="number of jobs n (tsc)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--policy", help="fifo or priority:i,j,... (mcss)")
    common.add_argument("--threads", type=int, help="worker processes (default: ROQ_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("bound", parents=[common], help="closed-form robust bounds")
    v = sub.add_parser("validate", parents=[common], help="per-path dominance campaign")
    v.add_argument("--tamper", action="store_true",
                   help="inflate one service time after certification (harness self-test)")
    sub.add_parser("adversary", parents=[common], help="worst case over the envelope by DP")
    c = sub.add_parser("curve", parents=[common], help="bound and simulated mean against rho")
    c.add_argument("--rho-grid", type=_parse_grid, help="comma-separated loads in (0, 1)")
    return p


def config_from_args(args) -> RunConfig:
    opts = {}
    if args.config is not None:
        with open(args.config) as fh:
            opts.update({k.replace("-", "_"): val for k, val in json.load(fh).items()})
    for key in ("model", "instance", "replications", "horizon", "jobs", "seed", "out", "policy", "threads"):
        val = getattr(args, key)
        if val is not None:
            opts[key] = val
    if getattr(args, "tamper", False):
        opts["tamper"] = True
    grid = getattr(args, "rho_grid", None)
    if grid is not None:
        opts["rho_grid"] = grid
    opts.setdefault("threads", threads_from_env())
    return RunConfig(command=args.command, **opts)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def cmd_bound(cfg: RunConfig) -> int:
    inst = cfg.load_instance()
    if cfg.model == "tsc":
        report = sojourn_bound(inst)
    else:
        report = mc.busy_period_bounds(inst)
    _write_json(cfg.out / "bound.json", report.to_dict())
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    inst = cfg.load_instance()
    arr, srv = cfg.dists()
    vdir = cfg.out / "violations"
    if cfg.model == "tsc":
        summary, recs = campaign.validate_tsc(inst, cfg.replications, cfg.seed, arr, srv,
                                              tamper=cfg.tamper, threads=cfg.threads)
        for r in recs:
            if r.violated:
                vdir.mkdir(parents=True, exist_ok=True)
                r.path.to_csv(vdir / f"tsc_rep{r.replication}.csv")
    else:
        summary, recs = campaign.validate_mcss(inst, cfg.replications, cfg.horizon, cfg.seed, arr, srv,
                                               policy=cfg.policy, threads=cfg.threads)
        for r in recs:
            if r.violating_periods or r.lemma.violations:
                vdir.mkdir(parents=True, exist_ok=True)
                with open(vdir / f"mcss_rep{r.rep.replication}.csv", "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["period", "B", "peakW", "busy_bound", "workload_bound"])
                    for i in r.violating_periods:
                        w.writerow([i, repr(r.rep.busy[i]), repr(r.rep.peaks[i]),
                                    repr(r.rep.busy_bound), repr(r.rep.workload_bound)])
    _write_json(cfg.out / "validate.json", summary)
    print(f"{cfg.model}: {summary['replications']} replications, {summary['violations']} violations")
    return EXIT_VIOLATION if summary["violations"] else EXIT_OK


def cmd_adversary(cfg: RunConfig) -> int:
    if cfg.model != "tsc":
        raise ValueError("adversary runs on the tandem model only")
    report = campaign.adversary(cfg.load_instance(), cfg.seed)
    _write_json(cfg.out / "adversary.json", report)
    print(f"agreement: {report['agreement']}")
    return EXIT_OK if report["agreement"] else EXIT_VIOLATION


def cmd_curve(cfg: RunConfig) -> int:
    inst = cfg.load_instance()
    if cfg.model == "tsc":
        rows = campaign.curve_tsc(inst, cfg.rho_grid, cfg.replications, cfg.seed, cfg.threads)
    else:
        rows = campaign.curve_mcss(inst, cfg.rho_grid, cfg.replications, cfg.horizon, cfg.seed, cfg.threads)
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "curve.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["rho", "bound", "estimate", "ratio"])
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) for k, v in r.items()})
    (cfg.out / "curve.svg").write_text(campaign.render_svg(rows, f"{cfg.model}: bound vs rho"))
    for r in rows:
        print(f"rho={r['rho']:g} bound={r['bound']:.6g} estimate={r['estimate']:.6g} ratio={r['ratio']:.3g}")
    return EXIT_OK if all(r["ratio"] >= 1 for r in rows) else EXIT_VIOLATION


COMMANDS = {"bound": cmd_bound, "validate": cmd_validate, "adversary": cmd_adversary, "curve": cmd_curve}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if cfg.command == "curve" and not cfg.rho_grid:
            parser.error("curve needs a non-empty --rho-grid")
        if cfg.command == "curve":
            campaign._check_grid(cfg.rho_grid)
        return COMMANDS[cfg.command](cfg)
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (RoqError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
