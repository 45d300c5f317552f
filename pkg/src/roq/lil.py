"""Certify budgets of uncertainty from realised sequences.

Given a sequence x_1..x_m and a rate r, the certified budget is the smallest
gamma with |sum of x over a window - (window length)/r| <= gamma * phi(length)
for every window the robust constraints look at: prefixes for the multiclass
model, suffixes (tails ending at job n) for the tandem model.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .envelope_math import E_2E, phi
from .errors import EmptySequence, LengthMismatch


@dataclass(frozen=True)
class BudgetSet:
    gamma: float
    orientation: str  # "forward" or "tail"
    rate: float
    horizon_k: int
    argmax_k: int  # window length attaining gamma
    finite_horizon: bool = True

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BudgetSet":
        return cls(**json.loads(text))


def kahan_prefix(x) -> np.ndarray:
    """Prefix sums with Kahan compensation."""
    out = np.empty(len(x), dtype=float)
    s = 0.0
    comp = 0.0
    for i, xi in enumerate(np.asarray(x, dtype=float).tolist()):
        y = xi - comp
        t = s + y
        comp = (t - s) - y
        s = t
        out[i] = s
    return out


def _certify_centered(seq, rate: float) -> tuple[float, int]:
    centered = np.asarray(seq, dtype=float) - 1.0 / rate
    dev = np.abs(kahan_prefix(centered))
    ratios = dev / phi(np.arange(1, len(dev) + 1, dtype=float))
    k = int(np.argmax(ratios))
    return float(ratios[k]), k + 1


def certify_forward(seq, rate: float) -> BudgetSet:
    """gamma = max_k |sum_{i<=k} seq_i - k/rate| / phi(k)."""
    seq = np.asarray(seq, dtype=float)
    if seq.size == 0:
        raise EmptySequence("cannot certify an empty sequence")
    if not rate > 0:
        raise ValueError("rate must be positive")
    gamma, k = _certify_centered(seq, rate)
    return BudgetSet(gamma=gamma, orientation="forward", rate=float(rate),
                     horizon_k=int(seq.size), argmax_k=k)


def certify_tail(seq, rate: float, n: int) -> BudgetSet:
    """gamma = max_{0<=k<n} |sum_{i=k+1}^n seq_i - (n-k)/rate| / phi(n-k)."""
    seq = np.asarray(seq, dtype=float)
    if seq.size != n:
        raise LengthMismatch(f"sequence has length {seq.size}, expected n = {n}")
    if n == 0:
        raise EmptySequence("cannot certify an empty sequence")
    if not rate > 0:
        raise ValueError("rate must be positive")
    gamma, k = _certify_centered(seq[::-1], rate)
    return BudgetSet(gamma=gamma, orientation="tail", rate=float(rate),
                     horizon_k=int(n), argmax_k=k)


def effective_gamma(budgets, floor: float) -> float:
    """Largest certified budget, lifted to ``floor`` (e^(2e)/lambda)."""
    return max([b.gamma for b in budgets] + [float(floor)])


def gamma_floor(rate: float) -> float:
    return E_2E / rate


def check_constraints(seq, rate: float, gamma: float, orientation: str = "forward",
                      slack: float = 1e-9) -> bool:
    """Re-check every window against gamma*phi, independently of the certifier."""
    seq = np.asarray(seq, dtype=float)
    if orientation == "tail":
        seq = seq[::-1]
    k = np.arange(1, seq.size + 1)
    dev = np.abs(np.cumsum(seq) - k / rate)
    bound = gamma * phi(k.astype(float))
    return bool(np.all(dev <= bound + slack * (1.0 + bound)))


def read_sequence_csv(path) -> np.ndarray:
    """Single-column CSV; a non-numeric first row is treated as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    vals = []
    for i, r in enumerate(rows):
        try:
            vals.append(float(r[0]))
        except ValueError:
            if i == 0:
                continue
            raise
    return np.asarray(vals, dtype=float)
