"""Multiclass single-server system with deterministic 0/1 routing.

Workload here is the total remaining service of every job present, including
the work of the downstream classes each job will still visit. Under that
definition W jumps only at external arrivals and is the same for every
work-conserving policy.

Service times are attached to jobs when they enter the system: the i-th job
(initial jobs first in class order, then external arrivals by time and class)
whose route visits class k receives v[k][i'] where i' counts earlier such jobs.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import simkit
from .envelope_math import E_2E, E_E, gamma_large_ok, phi
from .errors import (
    GammaTooSmall,
    HorizonExceeded,
    InsufficientData,
    NotNilpotent,
    PolicyUnknown,
    TimeTooSmall,
    Unstable,
    UnstableWarning,
)
from .lil import certify_forward, effective_gamma
from .paths import BusyPeriodLog, McssPath, WorkloadTrace
from .tandem import BoundReport


@dataclass(frozen=True)
class McssInstance:
    J: int
    lam: tuple
    mu: tuple
    P: tuple
    gamma_a: tuple = ()
    gamma_s: tuple = ()

    def __post_init__(self):
        J = self.J
        lam = tuple(float(x) for x in self.lam)
        mu = tuple(float(x) for x in self.mu)
        P = np.asarray(self.P, dtype=int).reshape(J, J) if J else np.zeros((0, 0), int)
        ga = tuple(float(x) for x in self.gamma_a) or (0.0,) * J
        gs = tuple(float(x) for x in self.gamma_s) or (0.0,) * J
        if len(lam) != J or len(mu) != J or len(ga) != J or len(gs) != J:
            raise ValueError(f"lambda, mu, gamma_a, gamma_s need {J} entries")
        if min(lam) < 0 or min(mu) <= 0:
            raise ValueError("need lambda >= 0 and mu > 0")
        if not np.isin(P, (0, 1)).all():
            raise ValueError("routing matrix entries must be 0 or 1")
        if np.any(P.sum(axis=1) > 1):
            raise ValueError("routing matrix rows must sum to 0 or 1")
        if min(ga + gs) < 0:
            raise ValueError("budgets must be nonnegative")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "P", tuple(tuple(int(x) for x in row) for row in P))
        object.__setattr__(self, "gamma_a", ga)
        object.__setattr__(self, "gamma_s", gs)

    @property
    def P_array(self) -> np.ndarray:
        return np.asarray(self.P, dtype=float).reshape(self.J, self.J)

    @property
    def gamma(self) -> float:
        return max(self.gamma_a + self.gamma_s)

    @property
    def lam_max(self) -> float:
        return max(self.lam)

    @property
    def lam_min(self) -> float:
        """Smallest positive external rate (inf when there are no external arrivals)."""
        return min((l for l in self.lam if l > 0), default=math.inf)

    @property
    def gamma_large(self) -> bool:
        return math.isfinite(self.lam_min) and gamma_large_ok(self.lam_min, self.gamma)

    def with_gamma(self, gamma: float) -> "McssInstance":
        return McssInstance(self.J, self.lam, self.mu, self.P, (gamma,) * self.J, (gamma,) * self.J)

    def to_dict(self) -> dict:
        return {"J": self.J, "lambda": list(self.lam), "mu": list(self.mu),
                "P": [list(r) for r in self.P], "gamma_a": list(self.gamma_a),
                "gamma_s": list(self.gamma_s)}

    @classmethod
    def from_dict(cls, d: dict) -> "McssInstance":
        J = int(d["J"])
        return cls(J=J, lam=tuple(d["lambda"]), mu=tuple(d["mu"]),
                   P=tuple(tuple(r) for r in d.get("P", [[0] * J] * J)),
                   gamma_a=tuple(d.get("gamma_a", ())), gamma_s=tuple(d.get("gamma_s", ())))

    @classmethod
    def from_json(cls, path) -> "McssInstance":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrafficSolution:
    lambda_bar: np.ndarray
    rho_bar: np.ndarray
    rho: float
    residual: float

    @property
    def lambda_bar_max(self) -> float:
        return float(self.lambda_bar.max())


def neumann_reach(P) -> np.ndarray:
    """sum_{k<J} (P^T)^k; equals (I - P^T)^{-1} when P is nilpotent."""
    P = np.asarray(P, dtype=float)
    J = P.shape[0]
    if np.any(np.linalg.matrix_power(P, J) != 0):
        raise NotNilpotent("P^J != 0: some jobs never leave the system")
    term = np.eye(J)
    total = np.eye(J)
    for _ in range(J - 1):
        term = P.T @ term
        total = total + term
    return total


def traffic_solve(inst: McssInstance) -> TrafficSolution:
    lam = np.asarray(inst.lam)
    lam_bar = neumann_reach(inst.P_array) @ lam
    rho_bar = lam_bar / np.asarray(inst.mu)
    rho = float(rho_bar.sum())
    resid = float(np.max(np.abs(lam_bar - lam - inst.P_array.T @ lam_bar)))
    if rho >= 1:
        warnings.warn(f"total load rho = {rho:.6g} >= 1", UnstableWarning, stacklevel=2)
    return TrafficSolution(lam_bar, rho_bar, rho, resid)


# --- policies ---------------------------------------------------------------

class FifoPolicy:
    """Non-preemptive; serves the job that entered its current buffer first."""

    name = "fifo"

    def choose(self, buffers, current):
        if current is not None:
            return current
        best = None
        for q in buffers:
            if q and (best is None or (q[0].entry, q[0].seq) < (best.entry, best.seq)):
                best = q[0]
        return best


class StaticPriority:
    """Preemptive-resume static priority, FIFO inside each class."""

    def __init__(self, order):
        self.order = tuple(int(c) for c in order)
        self.name = "priority:" + ",".join(str(c) for c in self.order)

    def choose(self, buffers, current):
        for c in self.order:
            if buffers[c]:
                return buffers[c][0]
        return None


def parse_policy(policy, J: int):
    if not isinstance(policy, str):
        return policy
    p = policy.strip().lower()
    if p in ("fifo", "fifo-across-classes"):
        return FifoPolicy()
    if p.startswith("static-priority") or p.startswith("priority"):
        rest = p.split(":", 1)[1] if ":" in p else p[p.find("(") + 1: p.rfind(")")] if "(" in p else ""
        order = [int(x) for x in rest.replace(" ", "").split(",") if x] or list(range(J))
        if sorted(order) != list(range(J)):
            raise PolicyUnknown(f"priority order {order} is not a permutation of 0..{J - 1}")
        return StaticPriority(order)
    raise PolicyUnknown(f"unknown policy {policy!r}")


# --- simulation -------------------------------------------------------------

class _Job:
    __slots__ = ("route", "services", "stage", "remaining", "work_left", "entry", "seq")

    def __init__(self, route, services, t, seq):
        self.route = route
        self.services = services
        self.stage = 0
        self.remaining = services[0]
        self.work_left = math.fsum(services)
        self.entry = t
        self.seq = seq


def entry_schedule(inst: McssInstance, path: McssPath, initial: str = "one-per-class"):
    """(time, class, service tuple) for every job entering by the horizon."""
    J = inst.J
    routes = simkit.routes(inst.P)
    entries = []
    if initial == "one-per-class":
        entries += [(0.0, j) for j in range(J)]
    elif initial != "empty":
        raise ValueError(f"unknown initial condition {initial!r}")
    arr = []
    for j in range(J):
        if inst.lam[j] <= 0 or len(path.u[j]) == 0:
            continue
        ep = np.cumsum(path.u[j])
        if ep[-1] <= path.horizon:
            raise HorizonExceeded(f"class {j} arrivals end at {ep[-1]:.6g} <= horizon")
        k = int(np.searchsorted(ep, path.horizon, side="right"))
        arr += [(float(t), j) for t in ep[:k]]
    arr.sort()
    entries += arr
    nxt = [0] * J
    out = []
    for t, c in entries:
        svc = []
        for k in routes[c]:
            if nxt[k] >= len(path.v[k]):
                raise HorizonExceeded(f"class {k} service sequence exhausted")
            svc.append(float(path.v[k][nxt[k]]))
            nxt[k] += 1
        out.append((t, c, tuple(svc)))
    return out, routes


def workload_trace(inst: McssInstance, path: McssPath, policy="fifo", initial: str = "one-per-class"):
    """Event-driven run of the single server up to ``path.horizon``.

    Returns ``(trace, log)``. Simultaneous events resolve completion first,
    then arrivals in class order. ``log.work`` holds, per completed busy period,
    the total service brought in by the jobs that entered during it.
    """
    J = inst.J
    pol = parse_policy(policy, J)
    horizon = path.horizon
    schedule, routes = entry_schedule(inst, path, initial)

    buffers = [deque() for _ in range(J)]
    log = BusyPeriodLog()
    times, values = [], []
    seq = 0
    si = 0
    t = 0.0
    current = None

    def workload():
        return math.fsum(job.work_left for q in buffers for job in q)

    def admit(t_now):
        nonlocal si, seq
        work = 0.0
        while si < len(schedule) and schedule[si][0] <= t_now:
            _, c, svc = schedule[si]
            buffers[c].append(_Job(routes[c], svc, t_now, seq))
            seq += 1
            si += 1
            work += math.fsum(svc)
        return work

    in_busy = False
    busy_start = idle_start = 0.0
    peak = period_work = 0.0
    w0_work = admit(0.0)
    w = workload()
    times.append(0.0)
    values.append(w)
    if w0_work > 0 or any(buffers):
        in_busy, busy_start, peak, period_work = True, 0.0, w, w0_work
    current = pol.choose(buffers, None)

    while True:
        t_arr = schedule[si][0] if si < len(schedule) else math.inf
        t_done = t + current.remaining if current is not None else math.inf
        te = min(t_arr, t_done)
        if te == math.inf or te > horizon:
            break
        if current is not None:
            if t_done <= t_arr:
                current.work_left -= current.remaining
                current.remaining = 0.0
                c = current.route[current.stage]
                buffers[c].popleft()
                current.stage += 1
                if current.stage < len(current.route):
                    current.remaining = current.services[current.stage]
                    current.entry = te
                    buffers[current.route[current.stage]].append(current)
                current = None
            else:
                elapsed = te - t
                current.remaining -= elapsed
                current.work_left -= elapsed
        t = te
        was_empty = not any(buffers)
        new_work = admit(te)
        w = workload()
        if was_empty and new_work > 0 or was_empty and any(buffers):
            if in_busy:  # zero-length gap: the busy period simply continues
                pass
            else:
                if log.busy:
                    log.idles[-1] = te - idle_start
                in_busy, busy_start, peak, period_work = True, te, w, new_work
        elif in_busy:
            period_work += new_work
        if in_busy and not any(buffers):
            log.starts.append(busy_start)
            log.busy.append(te - busy_start)
            log.idles.append(math.nan)
            log.peaks.append(peak)
            log.work.append(period_work)
            in_busy, idle_start = False, te
        peak = max(peak, w)
        times.append(te)
        values.append(w)
        current = pol.choose(buffers, current)

    if in_busy:
        log.censored_start = busy_start
    trace = WorkloadTrace(np.asarray(times), np.asarray(values), float(horizon))
    return trace, log


def workload_by_arrivals(inst: McssInstance, path: McssPath, initial: str = "one-per-class"):
    """Workload just after each entry epoch, by a Lindley-type recursion on the
    aggregate input. Independent of any policy; used as a cross-check."""
    schedule, _ = entry_schedule(inst, path, initial)
    times, values = [], []
    w, t_prev = 0.0, 0.0
    for t, _, svc in schedule:
        w = max(w - (t - t_prev), 0.0) + math.fsum(svc)
        if times and times[-1] == t:
            values[-1] = w
        else:
            times.append(t)
            values.append(w)
        t_prev = t
    if not times or times[0] > 0:
        times.insert(0, 0.0)
        values.insert(0, 0.0)
    return WorkloadTrace(np.asarray(times), np.asarray(values), path.horizon)


# --- robust bounds ----------------------------------------------------------

def time_lower_bound(inst: McssInstance, gamma: float | None = None) -> float:
    """Smallest t for which the arrival-count bounds apply."""
    G = inst.gamma if gamma is None else gamma
    lm = inst.lam_max
    return max(max(E_E / l, 1.0 / l + 3.0 * lm * lm * G * G / l) for l in inst.lam if l > 0)


def arrival_count_bound(inst: McssInstance, j: int, t: float, gamma: float | None = None) -> float:
    """Upper bound t*lam_j + 3 lam_j^2 Gamma^2 phi(t lam_j) on external arrivals A_j(t)."""
    G = inst.gamma if gamma is None else gamma
    t_low = time_lower_bound(inst, G)
    if t < t_low:
        raise TimeTooSmall(f"t = {t:.6g} is below the admissible lower limit {t_low:.6g}")
    lj = inst.lam[j]
    if lj == 0:
        return 0.0
    return t * lj + 3.0 * lj * lj * G * G * phi(t * lj)


def routed_count_phi_bound(inst: McssInstance, j: int, t: float, gamma: float | None = None,
                           traffic: TrafficSolution | None = None) -> float:
    """sqrt(2 + 6 lam_max^2 Gamma^2) * phi(lambda_bar_j t), bounding phi(Abar_j(t))."""
    G = inst.gamma if gamma is None else gamma
    tr = traffic_solve(inst) if traffic is None else traffic
    return math.sqrt(2.0 + 6.0 * inst.lam_max**2 * G * G) * phi(tr.lambda_bar[j] * t)


def net_work_bound(inst: McssInstance, t: float, gamma: float | None = None,
                   traffic: TrafficSolution | None = None) -> float:
    """(rho - 1) t + 3 lam_max Gamma^2 phi(lam_max t), bounding mean-work-in minus t."""
    G = inst.gamma if gamma is None else gamma
    tr = traffic_solve(inst) if traffic is None else traffic
    lm = inst.lam_max
    return (tr.rho - 1.0) * t + 3.0 * lm * G * G * phi(lm * t)


def busy_period_bounds(inst: McssInstance, gamma: float | None = None) -> BoundReport:
    """Robust bounds on the length of the busy period started at time 0 and on
    the peak workload inside it."""
    G = inst.gamma if gamma is None else float(gamma)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnstableWarning)
        tr = traffic_solve(inst)
    if tr.rho >= 1:
        raise Unstable(f"total load rho = {tr.rho:.6g} >= 1")
    if not math.isfinite(inst.lam_min):
        raise ValueError("bounds need at least one class with external arrivals")
    if not gamma_large_ok(inst.lam_min, G):
        raise GammaTooSmall(
            f"lambda_min*Gamma = {inst.lam_min * G:.6g} < e^(2e) = {E_2E:.6g} "
            "(gamma-large budget condition)"
        )
    J, L, rho = inst.J, tr.lambda_bar_max, tr.rho
    k = 4 * J + 3
    busy = 5.0 * k * k * L**3 * G**4 / (1 - rho) ** 2 * math.log(math.log(2.0 * k * L * L * G * G / (1 - rho)))
    work = (2.0 * k * k * L**3 * G**4 / (1 - rho) * math.log(math.log(k * L * L * G * G / (1 - rho)))
            + G + 3.0 * L * L * G**3)
    return BoundReport(
        formula_id="mcss-busy-workload-lnln",
        values={"busy_period": busy, "workload": work},
        inputs={"J": J, "lambda": list(inst.lam), "mu": list(inst.mu), "P": [list(r) for r in inst.P],
                "lambda_bar_max": L, "rho": rho, "gamma": G},
        preconditions={"gamma_large": True, "rho_lt_1": True},
    )


def stationary_workload_closed_form(inst: McssInstance, gamma: float) -> float:
    """25 (4J+3)^4 Lbar^6 mu_max Gamma^8 / (1-rho)^4 * lnln(...)^2."""
    tr = traffic_solve(inst)
    J, L, rho, G = inst.J, tr.lambda_bar_max, tr.rho, gamma
    k = 4 * J + 3
    ll = math.log(math.log(2.0 * k * L * L * G * G / (1 - rho)))
    return 25.0 * k**4 * L**6 * max(inst.mu) * G**8 / (1 - rho) ** 4 * ll * ll


# --- pathwise certification and lemma checks --------------------------------

def used_counts(inst: McssInstance, path: McssPath, t: float | None = None):
    """External arrivals A_j(t) and jobs routed through each class by t."""
    t = path.horizon if t is None else t
    A = np.array([int(np.searchsorted(np.cumsum(path.u[j]), t, side="right")) if len(path.u[j]) else 0
                  for j in range(inst.J)])
    visits = neumann_reach(inst.P_array) @ (A + 1)
    return A, visits.astype(int)


def certify_path(inst: McssInstance, path: McssPath, t: float | None = None) -> list:
    """Forward budgets for every sequence, truncated at what the run used by t."""
    A, visits = used_counts(inst, path, t)
    out = []
    for j in range(inst.J):
        if inst.lam[j] > 0 and A[j] > 0:
            out.append(certify_forward(path.u[j][: A[j]], inst.lam[j]))
        nv = min(int(visits[j]), len(path.v[j]))
        if nv > 0:
            out.append(certify_forward(path.v[j][:nv], inst.mu[j]))
    return out


@dataclass
class LemmaCheck:
    times: list
    arrival_violations: int = 0
    routed_violations: int = 0
    net_work_violations: int = 0
    details: list = field(default_factory=list)

    @property
    def violations(self) -> int:
        return self.arrival_violations + self.routed_violations + self.net_work_violations


def check_arrival_lemmas(inst: McssInstance, path: McssPath, times, gamma: float) -> LemmaCheck:
    """Check the three arrival-count inequalities at each t in ``times``."""
    tr = traffic_solve(inst)
    reach = neumann_reach(inst.P_array)
    m = 1.0 / np.asarray(inst.mu)
    epochs = [np.cumsum(u) if len(u) else np.empty(0) for u in path.u]
    res = LemmaCheck(times=list(times))
    for t in times:
        A = np.zeros(inst.J)
        for j in range(inst.J):
            if inst.lam[j] > 0:
                if epochs[j][-1] <= t:
                    raise HorizonExceeded(f"class {j} arrivals do not cover t = {t:.6g}")
                A[j] = np.searchsorted(epochs[j], t, side="right")
        Abar = reach @ A
        row = {"t": float(t)}
        for j in range(inst.J):
            if inst.lam[j] > 0:
                b = arrival_count_bound(inst, j, t, gamma)
                if A[j] > b:
                    res.arrival_violations += 1
            lhs = phi(Abar[j])
            rhs = routed_count_phi_bound(inst, j, t, gamma, tr)
            if lhs > rhs * (1 + 1e-12):
                res.routed_violations += 1
        net = float(m @ Abar) - t
        if net > net_work_bound(inst, t, gamma, tr) + 1e-9 * t:
            res.net_work_violations += 1
        row["A"] = A.tolist()
        row["net_work"] = net
        res.details.append(row)
    return res


# --- stochastic estimators --------------------------------------------------

@dataclass
class ReplicationResult:
    replication: int
    busy: list
    idles: list
    peaks: list
    mean_w: float
    gamma: float
    busy_bound: float
    workload_bound: float
    waiting_closed_form: float
    busy_violations: int
    peak_violations: int


def _mcss_replication(rep, inst, arr, srv, horizon, seed, policy):
    path = simkit.draw_path_mcss(inst, arr, srv, horizon, seed, rep)
    trace, log = workload_trace(inst, path, policy)
    G = effective_gamma(certify_path(inst, path), E_2E / inst.lam_min)
    rep_bounds = busy_period_bounds(inst, G).values
    return ReplicationResult(
        replication=rep, busy=list(log.busy), idles=list(log.idles), peaks=list(log.peaks),
        mean_w=trace.integral() / horizon, gamma=G,
        busy_bound=rep_bounds["busy_period"], workload_bound=rep_bounds["workload"],
        waiting_closed_form=stationary_workload_closed_form(inst, G),
        busy_violations=sum(b > rep_bounds["busy_period"] for b in log.busy),
        peak_violations=sum(p > rep_bounds["workload"] for p in log.peaks),
    )


@dataclass
class StationaryEstimates:
    replications: int
    n_periods: int
    eb: float
    ei: float
    eb2: float
    mean_w: float
    mean_w_stderr: float
    ratio: float  # E[B^2]/(E[B]+E[I]) from the busy/idle samples
    busy_bound_mean: float
    workload_bound_mean: float
    waiting_closed_form_mean: float
    busy_violations: int
    peak_violations: int

    @property
    def busy_dominated(self) -> bool:
        return self.eb <= self.busy_bound_mean

    @property
    def renewal_bound_holds(self) -> bool:
        """Time-average W <= E[B^2]/(E[B]+E[I]) up to 3 standard errors."""
        return self.mean_w - 3.0 * self.mean_w_stderr <= self.ratio

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["busy_dominated"] = self.busy_dominated
        d["renewal_bound_holds"] = self.renewal_bound_holds
        return d


def stationary_estimators(inst: McssInstance, replications: int, horizon: float, seed: int,
                          arrival_specs=None, service_specs=None, policy="fifo",
                          threads: int | None = None, min_periods: int = 30):
    """Monte Carlo estimates of E[B], E[I], E[B^2] and the time-average
    workload, next to the replication-averaged pathwise bounds.

    Returns ``(estimates, per_replication_results)``.
    """
    if replications < 1:
        raise InsufficientData("need at least one replication")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnstableWarning)
        tr = traffic_solve(inst)
    if tr.rho >= 1:
        raise Unstable(f"total load rho = {tr.rho:.6g} >= 1")
    d_arr, d_srv = simkit.default_dists(inst)
    arr = arrival_specs or d_arr
    srv = service_specs or d_srv
    fn = partial(_mcss_replication, inst=inst, arr=arr, srv=srv, horizon=horizon, seed=seed, policy=policy)
    results = simkit.run_replications(fn, replications, threads)
    return aggregate_replications(results, min_periods), results


def aggregate_replications(results, min_periods: int = 30) -> StationaryEstimates:
    busy = np.concatenate([r.busy for r in results]) if results else np.empty(0)
    if busy.size < min_periods:
        raise InsufficientData(f"only {busy.size} completed busy periods (need {min_periods})")
    idles = np.concatenate([r.idles for r in results])
    idles = idles[~np.isnan(idles)]
    ws = np.array([r.mean_w for r in results])
    eb, ei, eb2 = float(busy.mean()), float(idles.mean()), float(np.mean(busy**2))
    return StationaryEstimates(
        replications=len(results), n_periods=int(busy.size), eb=eb, ei=ei, eb2=eb2,
        mean_w=float(ws.mean()),
        mean_w_stderr=float(ws.std(ddof=1) / math.sqrt(ws.size)) if ws.size > 1 else float("nan"),
        ratio=eb2 / (eb + ei),
        busy_bound_mean=float(np.mean([r.busy_bound for r in results])),
        workload_bound_mean=float(np.mean([r.workload_bound for r in results])),
        waiting_closed_form_mean=float(np.mean([r.waiting_closed_form for r in results])),
        busy_violations=sum(r.busy_violations for r in results),
        peak_violations=sum(r.peak_violations for r in results),
    )
