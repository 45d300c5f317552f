"""Stochastic primitives, seeded streams and replication fan-out.

Streams are counter-based: replication r, sequence s draws from a Philox
generator keyed by the base seed whose counter starts at words (0, 0, s, r).
Each draw only advances the two low words, so distinct (r, s) pairs walk
disjoint regions of the counter space and a replication's path does not depend
on which other replications ran, or in what order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData
from .paths import McssPath, TscPath

BLOCK = 4096  # draws are made in fixed blocks so longer paths extend shorter ones


@dataclass(frozen=True)
class DistSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.params
        if self.kind == "exponential":
            ok = p["rate"] > 0
        elif self.kind == "deterministic":
            ok = p["value"] > 0
        elif self.kind == "uniform":
            ok = 0 <= p["lo"] <= p["hi"] and p["hi"] > 0
        elif self.kind == "lognormal":
            ok = p["sigma_log"] >= 0
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if not ok:
            raise ValueError(f"invalid parameters for {self.kind}: {p}")

    @classmethod
    def exponential(cls, rate: float) -> "DistSpec":
        return cls("exponential", {"rate": float(rate)})

    @classmethod
    def deterministic(cls, value: float) -> "DistSpec":
        return cls("deterministic", {"value": float(value)})

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "DistSpec":
        return cls("uniform", {"lo": float(lo), "hi": float(hi)})

    @classmethod
    def lognormal(cls, mu_log: float, sigma_log: float) -> "DistSpec":
        return cls("lognormal", {"mu_log": float(mu_log), "sigma_log": float(sigma_log)})

    @property
    def mean(self) -> float:
        p = self.params
        if self.kind == "exponential":
            return 1.0 / p["rate"]
        if self.kind == "deterministic":
            return p["value"]
        if self.kind == "uniform":
            return 0.5 * (p["lo"] + p["hi"])
        return math.exp(p["mu_log"] + 0.5 * p["sigma_log"] ** 2)

    @property
    def variance(self) -> float:
        p = self.params
        if self.kind == "exponential":
            return 1.0 / p["rate"] ** 2
        if self.kind == "deterministic":
            return 0.0
        if self.kind == "uniform":
            return (p["hi"] - p["lo"]) ** 2 / 12.0
        s2 = p["sigma_log"] ** 2
        return (math.exp(s2) - 1.0) * math.exp(2.0 * p["mu_log"] + s2)

    @property
    def rate(self) -> float:
        return 1.0 / self.mean

    def scaled(self, factor: float) -> "DistSpec":
        """Distribution of factor * X."""
        p = self.params
        if self.kind == "exponential":
            return DistSpec.exponential(p["rate"] / factor)
        if self.kind == "deterministic":
            return DistSpec.deterministic(p["value"] * factor)
        if self.kind == "uniform":
            return DistSpec.uniform(p["lo"] * factor, p["hi"] * factor)
        return DistSpec.lognormal(p["mu_log"] + math.log(factor), p["sigma_log"])

    def with_mean(self, mean: float) -> "DistSpec":
        return self.scaled(mean / self.mean)

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        p = self.params
        if self.kind == "exponential":
            return gen.exponential(1.0 / p["rate"], size)
        if self.kind == "deterministic":
            return np.full(size, p["value"])
        if self.kind == "uniform":
            return gen.uniform(p["lo"], p["hi"], size)
        return gen.lognormal(p["mu_log"], p["sigma_log"], size)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "DistSpec":
        d = dict(d)
        return cls(d.pop("kind"), {k: float(v) for k, v in d.items()})


def stream(base_seed: int, replication: int, sequence: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=int(base_seed), counter=[0, 0, int(sequence), int(replication)])
    )


def _draw_blocks(spec: DistSpec, gen: np.random.Generator, size: int) -> np.ndarray:
    nblocks = max(1, -(-size // BLOCK))
    return np.concatenate([spec.sample(gen, BLOCK) for _ in range(nblocks)])[:size]


def draw_sequence(spec: DistSpec, base_seed: int, replication: int, sequence: int, size: int) -> np.ndarray:
    return _draw_blocks(spec, stream(base_seed, replication, sequence), size)


def draw_until(spec: DistSpec, base_seed: int, replication: int, sequence: int, cover: float) -> np.ndarray:
    """Interarrival draws whose cumulative sum first exceeds ``cover``."""
    gen = stream(base_seed, replication, sequence)
    chunks = []
    total = 0.0
    while total <= cover:
        block = spec.sample(gen, BLOCK)
        chunks.append(block)
        total += float(block.sum())
    seq = np.concatenate(chunks)
    k = int(np.searchsorted(np.cumsum(seq), cover, side="right"))
    return seq[: k + 1]


@dataclass(frozen=True)
class ReplicationPlan:
    replications: int
    base_seed: int = 0
    horizon: float | None = None
    job_count: int | None = None

    def __post_init__(self):
        if self.replications < 0:
            raise ValueError("replications must be nonnegative")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")

    def stream_offset(self, replication: int, sequence: int) -> tuple:
        """Initial Philox counter for a (replication, sequence) pair."""
        return (0, 0, sequence, replication)


def threads_from_env(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("ROQ_THREADS", default)))
    except ValueError:
        return default


def run_replications(fn, replications: int, threads: int | None = None) -> list:
    """Apply ``fn`` to replication ids 0..R-1; results come back in id order."""
    threads = threads_from_env() if threads is None else threads
    ids = range(replications)
    if threads <= 1 or replications <= 1:
        return [fn(r) for r in ids]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, ids))


def draw_path_tsc(spec_a: DistSpec, spec_s, n: int, seed: int, replication: int = 0) -> TscPath:
    """n interarrivals (sequence 0) and J x n services (sequences 1..J)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = draw_sequence(spec_a, seed, replication, 0, n)
    v = np.vstack([draw_sequence(s, seed, replication, j + 1, n) for j, s in enumerate(spec_s)])
    return TscPath(u=u, v=v)


def routes(P) -> list:
    """Class sequence visited by a job entering at each class."""
    P = np.asarray(P)
    J = P.shape[0]
    out = []
    for j in range(J):
        r = [j]
        while P[r[-1]].sum() > 0 and len(r) <= J:
            r.append(int(np.argmax(P[r[-1]])))
        if len(r) > J:
            raise ValueError("routing matrix has a cycle")
        out.append(r)
    return out


def draw_path_mcss(inst, arrival_specs, service_specs, horizon: float, seed: int,
                   replication: int = 0, cover: float | None = None) -> McssPath:
    """Arrival sequences covering max(horizon, cover); services for every job that
    enters by the horizon (one initial job per class plus external arrivals).

    ``arrival_specs[j]`` is ignored (empty sequence) when lambda_j = 0.
    """
    J = inst.J
    cover = horizon if cover is None else max(cover, horizon)
    u = []
    entries = np.ones(J, dtype=int)
    for j in range(J):
        if inst.lam[j] > 0:
            seq = draw_until(arrival_specs[j], seed, replication, 2 * j, cover)
            entries[j] += int(np.searchsorted(np.cumsum(seq), horizon, side="right"))
        else:
            seq = np.empty(0)
        u.append(seq)
    visits = np.zeros(J, dtype=int)
    for j, r in enumerate(routes(inst.P)):
        for k in r:
            visits[k] += entries[j]
    v = [draw_sequence(service_specs[k], seed, replication, 2 * k + 1, int(visits[k])) for k in range(J)]
    return McssPath(u=tuple(u), v=tuple(v), horizon=float(horizon))


def default_dists(inst):
    """Exponential interarrivals/services at the instance rates."""
    arr = [DistSpec.exponential(l) if l > 0 else None for l in inst.lam]
    srv = [DistSpec.exponential(m) for m in inst.mu]
    return arr, srv


@dataclass
class ErgodicEstimates:
    mean_w: float
    eb: float
    ei: float
    eb2: float
    n_periods: int
    ratio: float  # E[B^2] / (E[B] + E[I])
    ratio_busy_only: float  # E[B^2] / E[B]
    mean_w_stderr: float
    n_cycles: int
    pathwise_t: float
    pathwise_lhs: float
    pathwise_rhs: float

    @property
    def pathwise_holds(self) -> bool:
        return self.pathwise_lhs <= self.pathwise_rhs * (1 + 1e-12)

    def as_tuple(self):
        return (self.mean_w, self.eb, self.ei, self.eb2, self.n_periods)


def ergodic_estimates(log, trace, t_end: float | None = None) -> ErgodicEstimates:
    """Time-average workload, busy/idle moments and the pathwise renewal bound.

    The standard error of the time average comes from the regenerative method
    over complete busy+idle cycles.
    """
    t_end = trace.t_end if t_end is None else float(t_end)
    if len(log) == 0:
        raise InsufficientData("no completed busy period")
    B = np.asarray(log.busy, dtype=float)
    I = np.asarray(log.idles, dtype=float)
    I_done = I[~np.isnan(I)]
    eb = float(B.mean())
    ei = float(I_done.mean()) if I_done.size else float("nan")
    eb2 = float(np.mean(B * B))
    mean_w = trace.integral(t_end) / t_end

    all_starts = list(log.starts) + ([log.censored_start] if log.censored_start is not None else [])
    complete = ~np.isnan(I)
    idx = np.flatnonzero(complete)
    idx = idx[idx + 1 < len(all_starts)]
    starts = np.asarray(all_starts, dtype=float)
    if idx.size >= 2:
        c0, c1 = starts[idx], starts[idx + 1]
        areas = trace.integral_at(c1) - trace.integral_at(c0)
        lengths = c1 - c0
        r = areas.sum() / lengths.sum()
        m = areas.size
        resid = areas - r * lengths
        stderr = float(math.sqrt(resid.var(ddof=1) / m) / lengths.mean())
    else:
        stderr = float("nan")

    t_chk = t_end if log.censored_start is None else log.censored_start
    n = log.n_of_t(t_chk)
    lhs = trace.integral(t_chk) / t_chk
    num = float(np.sum(B[:n] ** 2))
    den = float(np.sum(B[: n - 1] + np.nan_to_num(I[: n - 1])))
    rhs = num / den if den > 0 else float("inf")
    return ErgodicEstimates(
        mean_w=mean_w, eb=eb, ei=ei, eb2=eb2, n_periods=int(B.size),
        ratio=eb2 / (eb + ei) if I_done.size else float("nan"),
        ratio_busy_only=eb2 / eb,
        mean_w_stderr=stderr, n_cycles=int(idx.size),
        pathwise_t=float(t_chk), pathwise_lhs=float(lhs), pathwise_rhs=rhs,
    )
