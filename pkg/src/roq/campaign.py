"""Replication campaigns: per-path dominance checks, adversarial DP runs and
bound-versus-load curves. Workers return plain records; files are written by
the caller after all replications are reduced."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial

import numpy as np

from . import multiclass as mc
from . import simkit
from .envelope_math import E_2E
from .errors import InsufficientData, UnstableWarning
from .lil import certify_forward, certify_tail, effective_gamma
from .paths import TscPath
from .simkit import DistSpec
from .tandem import (
    Envelope,
    TscInstance,
    brute_force_chain_max,
    certified_envelope,
    envelope_bound,
    lil_envelope,
    lindley_sojourn,
    sojourn_bound,
    tail_sums,
)

REL_TOL = 1e-9


def _exceeds(x: float, bound: float) -> bool:
    return x > bound + REL_TOL * (1.0 + abs(bound))


# --- tandem -----------------------------------------------------------------

def tsc_default_dists(inst: TscInstance):
    return DistSpec.exponential(inst.lam), [DistSpec.exponential(m) for m in inst.mu]


def inflate_last_service(path: TscPath, amount: float, stage: int = 0) -> TscPath:
    """Copy of ``path`` with the last job's service at ``stage`` raised by ``amount``."""
    v = path.v.copy()
    v[stage, -1] += amount
    return TscPath(u=path.u.copy(), v=v)


@dataclass
class TscRecord:
    replication: int
    w_n: float
    mean_sojourn: float
    gamma: float
    closed_form: float
    envelope_value: float
    violated: bool
    path: TscPath | None = None  # kept only when violated


def tsc_replication(rep: int, inst: TscInstance, spec_a, spec_s, seed: int, tamper: bool = False) -> TscRecord:
    path = simkit.draw_path_tsc(spec_a, spec_s, inst.n, seed, rep)
    budgets = [certify_tail(path.u, inst.lam, inst.n)]
    budgets += [certify_tail(path.v[j], inst.mu[j], inst.n) for j in range(inst.J)]
    G = effective_gamma(budgets, E_2E / inst.lam)
    robust = inst.with_gamma(G)
    closed = sojourn_bound(robust).value
    env_val = float(envelope_bound(robust, certified_envelope(robust)))
    if tamper:
        path = inflate_last_service(path, 2.0 * closed)
    _, soj = lindley_sojourn(inst, path)
    w_n = float(soj[-1])
    bad = _exceeds(w_n, env_val) or _exceeds(w_n, closed)
    return TscRecord(rep, w_n, float(soj.mean()), G, closed, env_val, bad, path if bad else None)


def validate_tsc(inst: TscInstance, replications: int, seed: int, spec_a=None, spec_s=None,
                 tamper: bool = False, threads: int | None = None):
    """Returns (summary dict, records)."""
    d_a, d_s = tsc_default_dists(inst)
    fn = partial(tsc_replication, inst=inst, spec_a=spec_a or d_a, spec_s=spec_s or d_s,
                 seed=seed, tamper=tamper)
    recs = simkit.run_replications(fn, replications, threads)
    w = np.array([r.w_n for r in recs])
    summary = {
        "model": "tsc",
        "instance": inst.to_dict(),
        "replications": replications,
        "seed": seed,
        "violations": sum(r.violated for r in recs),
        "violating_replications": [r.replication for r in recs if r.violated],
        "mean_w_n": float(w.mean()) if w.size else math.nan,
        "max_w_n": float(w.max()) if w.size else math.nan,
        "mean_sojourn": float(np.mean([r.mean_sojourn for r in recs])) if recs else math.nan,
        "gamma_max": max((r.gamma for r in recs), default=math.nan),
        "closed_form_min": min((r.closed_form for r in recs), default=math.nan),
        "envelope_value_min": min((r.envelope_value for r in recs), default=math.nan),
    }
    return summary, recs


# --- multiclass -------------------------------------------------------------

@dataclass
class McssRecord:
    rep: mc.ReplicationResult
    lemma_gamma: float
    t_low: float
    lemma: mc.LemmaCheck
    violating_periods: list = field(default_factory=list)


def lemma_times(inst: mc.McssInstance, t_low: float, seed: int, rep: int, count: int = 20) -> np.ndarray:
    """``count`` times log-uniform on [t_low, 4 t_low], from their own stream."""
    gen = simkit.stream(seed, rep, 2 * inst.J)
    return np.sort(t_low * np.exp(gen.uniform(0.0, math.log(4.0), count)))


def lemma_check_replication(inst, arr, srv, horizon, seed, rep, count: int = 20, max_rounds: int = 8):
    """Arrival-lemma checks at times past the admissibility limit.

    That limit usually lies beyond the simulation horizon, so arrivals are
    drawn further out (the prefix is unchanged). Gamma is certified on the
    extended arrivals; if it grows, the limit moves and the draw is repeated.
    """
    floor = E_2E / inst.lam_min
    path = simkit.draw_path_mcss(inst, arr, srv, horizon, seed, rep)
    G = effective_gamma(mc.certify_path(inst, path), floor)
    for _ in range(max_rounds):
        t_low = mc.time_lower_bound(inst, G)
        cover = 4.0 * t_low
        ext = simkit.draw_path_mcss(inst, arr, srv, horizon, seed, rep, cover=cover)
        A, _ = mc.used_counts(inst, ext, cover)
        budgets = [certify_forward(ext.u[j][: A[j] + 1], inst.lam[j])
                   for j in range(inst.J) if inst.lam[j] > 0]
        G_new = effective_gamma(budgets, G)
        if G_new <= G:
            break
        G = G_new
    t_low = mc.time_lower_bound(inst, G)
    times = lemma_times(inst, t_low, seed, rep, count)
    return G, t_low, mc.check_arrival_lemmas(inst, ext, times, G)


def mcss_replication(rep, inst, arr, srv, horizon, seed, policy, lemma_count):
    r = mc._mcss_replication(rep, inst, arr, srv, horizon, seed, policy)
    bad = [i for i, (b, p) in enumerate(zip(r.busy, r.peaks))
           if _exceeds(b, r.busy_bound) or _exceeds(p, r.workload_bound)]
    if lemma_count > 0:
        G, t_low, lem = lemma_check_replication(inst, arr, srv, horizon, seed, rep, lemma_count)
    else:
        G, t_low, lem = math.nan, math.nan, mc.LemmaCheck(times=[])
    return McssRecord(r, G, t_low, lem, bad)


def validate_mcss(inst: mc.McssInstance, replications: int, horizon: float, seed: int,
                  arrival_specs=None, service_specs=None, policy="fifo", lemma_count: int = 20,
                  threads: int | None = None):
    d_a, d_s = simkit.default_dists(inst)
    fn = partial(mcss_replication, inst=inst, arr=arrival_specs or d_a, srv=service_specs or d_s,
                 horizon=horizon, seed=seed, policy=policy, lemma_count=lemma_count)
    recs = simkit.run_replications(fn, replications, threads)
    n_bad = sum(len(r.violating_periods) for r in recs)
    lemma_bad = sum(r.lemma.violations for r in recs)
    summary = {
        "model": "mcss",
        "instance": inst.to_dict(),
        "replications": replications,
        "horizon": horizon,
        "seed": seed,
        "policy": str(policy),
        "busy_violations": sum(r.rep.busy_violations for r in recs),
        "peak_violations": sum(r.rep.peak_violations for r in recs),
        "lemma_violations": lemma_bad,
        "lemma_times_checked": sum(len(r.lemma.times) for r in recs),
        "violations": n_bad + lemma_bad,
        "violating_replications": [r.rep.replication for r in recs
                                   if r.violating_periods or r.lemma.violations],
        "completed_busy_periods": sum(len(r.rep.busy) for r in recs),
        "max_busy": max((max(r.rep.busy, default=0.0) for r in recs), default=math.nan),
        "max_peak": max((max(r.rep.peaks, default=0.0) for r in recs), default=math.nan),
        "busy_bound_min": min((r.rep.busy_bound for r in recs), default=math.nan),
        "workload_bound_min": min((r.rep.workload_bound for r in recs), default=math.nan),
    }
    try:
        summary["estimates"] = mc.aggregate_replications([r.rep for r in recs]).to_dict()
    except InsufficientData as exc:
        summary["estimates"] = {"error": str(exc)}
    return summary, recs


# --- adversary --------------------------------------------------------------

def hull_envelope(paths, pad: float = 0.0) -> Envelope:
    """Smallest envelope containing every path, widened by ``pad`` on each side."""
    def hull(tables):
        lo = [min(col) - pad for col in zip(*tables)]
        hi = [max(col) + pad for col in zip(*tables)]
        return lo, hi

    g_min, g_max = hull([tail_sums(p.u) for p in paths])
    rows = [hull([tail_sums(p.v[j]) for p in paths]) for j in range(paths[0].J)]
    return Envelope(g_min, g_max, [r[0] for r in rows], [r[1] for r in rows])


def random_rational_envelope(rng: np.random.Generator, J: int, n: int, denom: int = 8) -> Envelope:
    """Envelope with Fraction entries: tail sums of a random path -/+ random widths."""
    def table():
        x = [Fraction(int(rng.integers(0, 10 * denom)), denom) for _ in range(n)]
        t = tail_sums(x)
        lo = [s - Fraction(int(rng.integers(0, 3 * denom)), denom) for s in t]
        hi = [s + Fraction(int(rng.integers(0, 3 * denom)), denom) for s in t]
        return lo, hi

    g_min, g_max = table()
    rows = [table() for _ in range(J)]
    return Envelope(g_min, g_max, [r[0] for r in rows], [r[1] for r in rows])


def adversary(inst: TscInstance, seed: int, random_trials: int = 20):
    """DP on the LIL envelope, DP vs Lindley on a degenerate envelope and, for
    small instances, DP vs exhaustive enumeration."""
    report = {"instance": inst.to_dict(), "seed": seed}
    agree = True
    if inst.gamma_large:
        val, chain = envelope_bound(inst, lil_envelope(inst), return_chain=True)
        closed = sojourn_bound(inst).value
        report["lil"] = {"max_value": float(val), "argmax_chain": list(chain),
                         "closed_form": closed, "below_closed_form": bool(val < closed)}
        agree &= bool(val < closed)
    d_a, d_s = tsc_default_dists(inst)
    path = simkit.draw_path_tsc(d_a, d_s, inst.n, seed, 0)
    dval, dchain = envelope_bound(inst, Envelope.from_path(path), return_chain=True)
    lind = float(lindley_sojourn(inst, path)[1][-1])
    ok = abs(float(dval) - lind) <= REL_TOL * (1.0 + lind)
    report["degenerate"] = {"max_value": float(dval), "argmax_chain": list(dchain),
                            "lindley_sojourn": lind, "agree": bool(ok)}
    agree &= ok
    if inst.n <= 12 and inst.J <= 3:
        rng = np.random.default_rng(seed)
        mismatches = 0
        last = None
        for _ in range(random_trials):
            env = random_rational_envelope(rng, inst.J, inst.n)
            dp, chain = envelope_bound(inst, env, return_chain=True)
            bf, _ = brute_force_chain_max(inst, env)
            mismatches += dp != bf
            last = {"max_value": str(dp), "argmax_chain": list(chain), "brute_force": str(bf)}
        report["enumeration"] = {"trials": random_trials, "mismatches": int(mismatches), "last": last}
        agree &= mismatches == 0
    report["agreement"] = bool(agree)
    return report


# --- curves -----------------------------------------------------------------

def _check_grid(grid) -> list:
    grid = [float(r) for r in grid]
    if not grid:
        raise ValueError("rho grid is empty")
    if any(not 0 < r < 1 for r in grid):
        raise ValueError(f"rho grid values must lie in (0, 1): {grid}")
    return grid


def curve_tsc(base: TscInstance, grid, replications: int, seed: int, threads=None):
    """Per rho: replication-averaged pathwise bound and mean simulated sojourn.

    lambda is kept and the service rates of ``base`` are scaled together so the
    bottleneck intensity equals rho; the budget floor then does not move.
    """
    rows = []
    for rho in _check_grid(grid):
        f = base.lam / (rho * min(base.mu))
        inst = TscInstance(base.J, base.n, base.lam, tuple(m * f for m in base.mu))
        _, recs = validate_tsc(inst, replications, seed, threads=threads)
        bound = float(np.mean([r.closed_form for r in recs]))
        est = float(np.mean([r.mean_sojourn for r in recs]))
        rows.append({"rho": rho, "bound": bound, "estimate": est, "ratio": bound / est})
    return rows


def curve_mcss(base: mc.McssInstance, grid, replications: int, horizon: float, seed: int,
               threads=None):
    """Per rho: averaged stationary-workload bound and simulated time-average W.

    External rates of ``base`` are scaled so the total load equals rho.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnstableWarning)
        rho0 = mc.traffic_solve(base).rho
    rows = []
    for rho in _check_grid(grid):
        f = rho / rho0
        inst = mc.McssInstance(base.J, tuple(l * f for l in base.lam), base.mu, base.P)
        est, _ = mc.stationary_estimators(inst, replications, horizon, seed, threads=threads, min_periods=1)
        bound = est.waiting_closed_form_mean
        rows.append({"rho": rho, "bound": bound, "estimate": est.mean_w, "ratio": bound / est.mean_w})
    return rows


def render_svg(rows, title: str = "bound vs rho", width: int = 640, height: int = 400) -> str:
    """Two-series line chart (bound, estimate) on a log10 y axis."""
    ml, mr, mt, mb = 70, 20, 40, 50
    xs = [r["rho"] for r in rows]
    ys = [v for r in rows for v in (r["bound"], r["estimate"]) if v > 0]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x0, x1 = x0 - 0.05, x1 + 0.05
    y0 = math.floor(math.log10(min(ys)))
    y1 = math.ceil(math.log10(max(ys)))
    if y1 == y0:
        y1 += 1

    def px(x):
        return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

    def py(y):
        return height - mb - (math.log10(y) - y0) / (y1 - y0) * (height - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>']
    step = max(1, (y1 - y0) // 8)
    for e in range(y0, y1 + 1, step):
        y = py(10.0**e)
        out.append(f'<line x1="{ml - 4}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="11">1e{e}</text>')
    for x in xs:
        out.append(f'<text x="{px(x):.1f}" y="{height - mb + 16}" text-anchor="middle" '
                   f'font-size="11">{x:g}</text>')
    out.append(f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">rho</text>')
    for key, colour, dy in (("bound", "#c0392b", 0), ("estimate", "#2c6fbb", 16)):
        pts = " ".join(f"{px(r['rho']):.1f},{py(r[key]):.1f}" for r in rows if r[key] > 0)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{width - mr - 80}" y="{mt + 10 + dy}" font-size="12" fill="{colour}">{key}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
