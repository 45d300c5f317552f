"""FIFO tandem of J single servers: exact recursions and robust sojourn bounds.

Tail-sum convention used throughout: an envelope table indexed k = 1..n bounds
sum_{i=k}^{n} of a sequence, and index n+1 (the empty tail) is 0. Tables are
stored 0-based, so table[k-1] holds index k.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .envelope_math import E_2E, UShape, gamma_large_ok, phi, umax_bound
from .errors import DimensionMismatch, GammaTooSmall, UnstableInstance
from .paths import TscPath


@dataclass(frozen=True)
class TscInstance:
    J: int
    n: int
    lam: float
    mu: tuple
    gamma_a: float = 0.0
    gamma_s: tuple = ()

    def __post_init__(self):
        mu = tuple(float(m) for m in np.atleast_1d(self.mu))
        gs = tuple(float(g) for g in np.atleast_1d(self.gamma_s)) or (0.0,) * len(mu)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma_s", gs)
        if self.J < 1 or self.n < 1:
            raise ValueError("J and n must be positive")
        if len(mu) != self.J or len(gs) != self.J:
            raise DimensionMismatch(f"mu and gamma_s need {self.J} entries")
        if not self.lam > 0 or min(mu) <= 0:
            raise ValueError("rates must be positive")
        if self.gamma_a < 0 or min(gs) < 0:
            raise ValueError("budgets must be nonnegative")

    @property
    def rho_star(self) -> float:
        return self.lam / min(self.mu)

    @property
    def gamma(self) -> float:
        return max((self.gamma_a,) + self.gamma_s)

    @property
    def gamma_large(self) -> bool:
        return gamma_large_ok(self.lam, self.gamma)

    def with_gamma(self, gamma: float) -> "TscInstance":
        return TscInstance(self.J, self.n, self.lam, self.mu, gamma, (gamma,) * self.J)

    def to_dict(self) -> dict:
        return {"J": self.J, "n": self.n, "lambda": self.lam, "mu": list(self.mu),
                "gamma_a": self.gamma_a, "gamma_s": list(self.gamma_s)}

    @classmethod
    def from_dict(cls, d: dict) -> "TscInstance":
        lam = d["lambda"]
        if isinstance(lam, (list, tuple)):
            (lam,) = lam
        gamma_a = d.get("gamma_a", 0.0)
        if isinstance(gamma_a, (list, tuple)):
            (gamma_a,) = gamma_a
        return cls(J=int(d["J"]), n=int(d.get("n", 1)), lam=float(lam), mu=tuple(d["mu"]),
                   gamma_a=float(gamma_a), gamma_s=tuple(d.get("gamma_s", ())))

    @classmethod
    def from_json(cls, path) -> "TscInstance":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Envelope:
    """Lower/upper tail-sum tables for arrivals (length n) and services (J x n)."""

    g_min: object
    g_max: object
    gj_min: object
    gj_max: object

    def __post_init__(self):
        for name in ("g_min", "g_max"):
            object.__setattr__(self, name, _as_table(getattr(self, name)))
        for name in ("gj_min", "gj_max"):
            object.__setattr__(self, name, [_as_table(r) for r in getattr(self, name)])
        n = len(self.g_min)
        if len(self.g_max) != n or any(len(r) != n for r in self.gj_min + self.gj_max):
            raise DimensionMismatch("all envelope tables must have length n")
        if len(self.gj_min) != len(self.gj_max):
            raise DimensionMismatch("gj_min and gj_max must have J rows")
        if any(lo > hi for lo, hi in zip(self.g_min, self.g_max)) or any(
            lo > hi for rlo, rhi in zip(self.gj_min, self.gj_max) for lo, hi in zip(rlo, rhi)
        ):
            raise ValueError("envelope lower table exceeds upper table")

    @property
    def n(self) -> int:
        return len(self.g_min)

    @property
    def J(self) -> int:
        return len(self.gj_min)

    @classmethod
    def from_path(cls, path: TscPath) -> "Envelope":
        """Degenerate envelope pinning every tail sum to its realised value."""
        tu = tail_sums(path.u)
        tv = [tail_sums(row) for row in path.v]
        return cls(tu, tu, tv, tv)

    def contains(self, path: TscPath, tol: float = 1e-9) -> bool:
        """True if the path's tail sums sit inside the envelope."""
        def inside(seq, lo, hi):
            t = tail_sums(seq)
            return all(l - tol * (1 + abs(l)) <= x <= h + tol * (1 + abs(h)) for x, l, h in zip(t, lo, hi))
        return inside(path.u, self.g_min, self.g_max) and all(
            inside(path.v[j], self.gj_min[j], self.gj_max[j]) for j in range(self.J)
        )


def _as_table(x) -> list:
    if isinstance(x, np.ndarray):
        return x.tolist()
    return list(x)


def tail_sums(seq) -> list:
    """[sum_{i=k}^n seq_i for k = 1..n], exact for Fractions."""
    if isinstance(seq, np.ndarray) and seq.dtype != object:
        return np.cumsum(seq[::-1])[::-1].tolist()
    out = []
    acc = 0
    for x in reversed(list(seq)):
        acc = acc + x
        out.append(acc)
    return out[::-1]


@dataclass
class BoundReport:
    formula_id: str
    values: dict
    inputs: dict
    preconditions: dict
    notes: list = field(default_factory=list)

    @property
    def value(self) -> float:
        return next(iter(self.values.values()))

    def to_dict(self) -> dict:
        return {"formula_id": self.formula_id, "value": self.value, "values": self.values,
                "inputs": self.inputs,
                "preconditions_checked": self.preconditions, "notes": self.notes}


def _check_dims(inst: TscInstance, path: TscPath) -> None:
    if path.J != inst.J or path.n != inst.n:
        raise DimensionMismatch(
            f"path is J={path.J}, n={path.n}; instance is J={inst.J}, n={inst.n}"
        )


def lindley_sojourn(inst: TscInstance, path: TscPath):
    """Waiting times w (J x n) and sojourn times (n) by the Lindley recursion.

    Server j sees interarrival times u_j: u_1 is the external stream, and for
    j > 1 the gap between jobs i-1 and i is the upstream service of job i plus
    the upstream idle time before it.
    """
    _check_dims(inst, path)
    J, n = inst.J, inst.n
    w = np.zeros((J, n))
    idle = np.zeros((J, n))
    u_j = path.u.tolist()
    for j in range(J):
        v = path.v[j].tolist()
        wj = [0.0] * n
        ij = [0.0] * n
        for i in range(1, n):
            slack = wj[i - 1] + v[i - 1] - u_j[i]
            if slack > 0:
                wj[i] = slack
            else:
                ij[i] = -slack
        w[j] = wj
        idle[j] = ij
        u_j = [v[i] + ij[i] for i in range(n)]
    sojourn = (w + path.v).sum(axis=0)
    return w, sojourn


def _chain_dp(costs: list, want_chain: bool = False):
    """max over 1 <= k_1 <= ... <= k_J <= n of sum_j costs[j][k_j - 1].

    Each stage keeps the best value achievable with k_j <= K (prefix maxima);
    ties go to the smaller index.
    """
    J = len(costs)
    n = len(costs[0])
    prev = None
    stages = []
    for j in range(J):
        c = costs[j]
        cur_best = []
        cur_arg = []
        best = None
        arg = 0
        for k in range(n):
            val = c[k] if prev is None else prev[k] + c[k]
            if best is None or val > best:
                best, arg = val, k
            cur_best.append(best)
            cur_arg.append(arg)
        stages.append(cur_arg)
        prev = cur_best
    value = prev[n - 1]
    if not want_chain:
        return value, None
    chain = [0] * J
    limit = n - 1
    for j in range(J - 1, -1, -1):
        k = stages[j][limit]
        chain[j] = k + 1
        limit = k
    return value, tuple(chain)


def _envelope_costs(g_min, gj_min, gj_max) -> list:
    """Separable per-stage costs of the chain objective.

    Stage 1: gj_max[1](k) - g_min(k+1); stage j > 1: gj_max[j](k) - gj_min[j-1](k+1).
    """
    J = len(gj_max)
    n = len(g_min)

    def shifted(table):
        return list(table[1:]) + [0 * table[0]]

    costs = [[hi - lo for hi, lo in zip(gj_max[0], shifted(g_min))]]
    for j in range(1, J):
        costs.append([hi - lo for hi, lo in zip(gj_max[j], shifted(gj_min[j - 1]))])
    assert all(len(c) == n for c in costs)
    return costs


def envelope_bound(inst: TscInstance, env: Envelope, return_chain: bool = False):
    """Worst-case sojourn time of job n over all paths inside the envelope.

    Evaluates max over n >= k_J >= ... >= k_1 >= 1 of
    sum_{j<J} (gj_max[j](k_j) - gj_min[j](k_{j+1}+1)) + gj_max[J](k_J) - g_min(k_1+1)
    in O(nJ).
    """
    if env.J != inst.J or env.n != inst.n:
        raise DimensionMismatch(f"envelope is J={env.J}, n={env.n}; instance is J={inst.J}, n={inst.n}")
    value, chain = _chain_dp(_envelope_costs(env.g_min, env.gj_min, env.gj_max), return_chain)
    return (value, chain) if return_chain else value


def chain_max_sojourn(inst: TscInstance, path: TscPath, return_chain: bool = False):
    """Sojourn time of job n as a max over monotone index chains.

    W_n = max over k_1 <= ... <= k_J of
    sum_j sum_{i=k_j}^{k_{j+1}} v[j][i] (k_{J+1} := n) - sum_{i=k_1+1}^n u_i.
    """
    _check_dims(inst, path)
    return envelope_bound(inst, Envelope.from_path(path), return_chain)


def brute_force_chain_max(inst: TscInstance, env: Envelope):
    """Exhaustive enumeration of monotone chains (small n and J only)."""
    n, J = env.n, env.J

    def at(table, k):  # 1-based, index n+1 is the empty tail
        return table[k - 1] if k <= n else 0 * table[0]

    best = None
    best_chain = None
    for chain in itertools.combinations_with_replacement(range(1, n + 1), J):
        val = at(env.gj_max[J - 1], chain[-1]) - at(env.g_min, chain[0] + 1)
        for j in range(J - 1):
            val += at(env.gj_max[j], chain[j]) - at(env.gj_min[j], chain[j + 1] + 1)
        if best is None or val > best:
            best, best_chain = val, chain
    return best, best_chain


def tail_envelope_table(n: int, rate: float, gamma: float):
    """(lower, upper) tables (n+1-k)/rate -/+ gamma*phi(n+1-k), k = 1..n."""
    m = np.arange(n, 0, -1, dtype=float)
    centre = m / rate
    width = gamma * phi(m)
    return centre - width, centre + width


def lil_envelope(inst: TscInstance) -> Envelope:
    if not inst.gamma_large:
        raise GammaTooSmall(
            f"lambda*Gamma = {inst.lam * inst.gamma:.6g} < e^(2e) = {E_2E:.6g} "
            "(gamma-large budget condition)"
        )
    return certified_envelope(inst)


def certified_envelope(inst: TscInstance) -> Envelope:
    """LIL envelope from the instance budgets, without the gamma-large check."""
    g_min, g_max = tail_envelope_table(inst.n, inst.lam, inst.gamma_a)
    rows = [tail_envelope_table(inst.n, m, g) for m, g in zip(inst.mu, inst.gamma_s)]
    return Envelope(g_min, g_max, [r[0] for r in rows], [r[1] for r in rows])


def sojourn_bound(inst: TscInstance) -> BoundReport:
    """Closed-form robust bound on the sojourn time of any job.

    7 J^2 Gamma^2 lambda / (1-rho*) * lnln(J lambda Gamma / (1-rho*)) + J/lambda,
    where Gamma is the largest budget. Independent of n.
    """
    rho = inst.rho_star
    if rho >= 1:
        raise UnstableInstance(f"bottleneck intensity rho* = {rho:.6g} >= 1")
    if not inst.gamma_large:
        raise GammaTooSmall(
            f"lambda*Gamma = {inst.lam * inst.gamma:.6g} < e^(2e) = {E_2E:.6g} "
            "(gamma-large budget condition)"
        )
    J, lam, G = inst.J, inst.lam, inst.gamma
    value = 7.0 * J * J * G * G * lam / (1.0 - rho) * math.log(math.log(J * lam * G / (1.0 - rho))) + J / lam
    return BoundReport(
        formula_id="tsc-sojourn-lnln",
        values={"sojourn": value},
        inputs={"J": J, "lambda": lam, "mu": list(inst.mu), "rho_star": rho, "gamma": G},
        preconditions={"gamma_large": True, "rho_star_lt_1": True},
        notes=["bound does not depend on the job index n"],
    )


def sojourn_ushape(inst: TscInstance) -> UShape:
    """U-curve the closed-form bound maximises: a = 1/lambda - 1/mu_min, b = J Gamma, c = J/lambda."""
    return UShape(a=1.0 / inst.lam - 1.0 / min(inst.mu), b=inst.J * inst.gamma, c=inst.J / inst.lam)


def sojourn_bound_via_ushape(inst: TscInstance) -> float:
    """Same bound assembled from the generic U-curve supremum (cross-check)."""
    return umax_bound(sojourn_ushape(inst))
