"""The LIL envelope function and the drift-plus-fluctuation curve U(x).

U(x) = -a*x + 2*b*phi(x) + c is the shape every sojourn/workload bound reduces
to: a linear drift pulling the process down against a sqrt(x lnln x)
fluctuation. This module holds the closed-form supremum bound, the negativity
threshold, the analytic bracket of the stationary point, and numeric oracles
for all three.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .errors import CapTooSmall, OffsetTooLarge, RatioViolation

E_E = math.exp(math.e)
E_2E = math.exp(2.0 * math.e)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def gamma_large_ok(rate: float, gamma: float) -> bool:
    """rate * gamma >= e^(2e), allowing for the roundoff in gamma = e^(2e)/rate."""
    return rate * gamma >= E_2E * (1.0 - 1e-12)


def phi(x):
    """sqrt(x ln ln x) for x >= e^e, else 1. Accepts scalars or arrays.

    The function is evaluated literally: it jumps from 1 to e^(e/2) at x = e^e.
    """
    if np.ndim(x) == 0:
        x = float(x)
        if x >= E_E:
            return math.sqrt(x * math.log(math.log(x)))
        return 1.0
    x = np.asarray(x, dtype=float)
    big = x >= E_E
    safe = np.where(big, x, E_E)
    return np.where(big, np.sqrt(safe * np.log(np.log(safe))), 1.0)


@dataclass(frozen=True)
class UShape:
    a: float
    b: float
    c: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c >= 0):
            raise ValueError(f"UShape needs a > 0, b > 0, c >= 0; got {self}")

    @property
    def ratio(self) -> float:
        return self.b / self.a

    @property
    def ratio_ok(self) -> bool:
        return self.ratio >= E_2E


def u_value(shape: UShape, x):
    return -shape.a * x + 2.0 * shape.b * phi(x) + shape.c


def u_derivative(shape: UShape, x: float) -> float:
    """dU/dx on the smooth branch x > e^e."""
    lx = math.log(x)
    llx = math.log(lx)
    return -shape.a + shape.b * math.sqrt(llx / x) + shape.b / (lx * math.sqrt(x * llx))


def _require_ratio(shape: UShape) -> None:
    if not shape.ratio_ok:
        raise RatioViolation(
            f"b/a = {shape.ratio:.6g} is below e^(2e) = {E_2E:.6g}"
        )


def _golden_max(f, lo: float, hi: float, rtol: float) -> float:
    """Maximiser of a unimodal f on [lo, hi], searched in log-space."""
    llo, lhi = math.log(lo), math.log(hi)
    g = lambda s: f(math.exp(s))
    x1 = lhi - _GOLDEN * (lhi - llo)
    x2 = llo + _GOLDEN * (lhi - llo)
    f1, f2 = g(x1), g(x2)
    while lhi - llo > rtol:
        if f1 < f2:
            llo, x1, f1 = x1, x2, f2
            x2 = llo + _GOLDEN * (lhi - llo)
            f2 = g(x2)
        else:
            lhi, x2, f2 = x2, x1, f1
            x1 = lhi - _GOLDEN * (lhi - llo)
            f1 = g(x1)
    # the endpoints are candidates too (max may sit on the boundary)
    cands = [lo, math.exp(0.5 * (llo + lhi)), hi]
    return max(cands, key=f)


def default_search_cap(shape: UShape) -> float:
    alpha = max(shape.ratio, E_E)
    return max(10.0 * E_E, 40.0 * alpha**2 * max(math.log(math.log(alpha)), 1.0))


def u_numeric_max(shape: UShape, search_cap: float | None = None, rtol: float = 1e-10):
    """Numerically maximise U over [0, search_cap].

    Returns ``(x_star, value)``. The flat branch x < e^e peaks at x = 0; the
    smooth branch [e^e, cap] is concave and is handled by golden-section search.
    """
    cap = default_search_cap(shape) if search_cap is None else float(search_cap)
    if cap <= E_E:
        raise CapTooSmall(f"search cap {cap} must exceed e^e")
    if u_value(shape, cap) > 0 and u_derivative(shape, cap) > 0:
        raise CapTooSmall(f"U is still positive and increasing at x = {cap:.6g}")
    f = lambda x: u_value(shape, x)
    x_smooth = _golden_max(f, E_E, cap, rtol)
    v_smooth = f(x_smooth)
    v_zero = f(0.0)
    if v_zero >= v_smooth:
        return 0.0, v_zero
    return x_smooth, v_smooth


def umax_bound(shape: UShape) -> float:
    """Closed-form upper bound 7 (b^2/a) lnln(b/a) + c on sup U."""
    _require_ratio(shape)
    a, b, c = shape.a, shape.b, shape.c
    return 7.0 * (b * b / a) * math.log(math.log(b / a)) + c


def negativity_threshold(shape: UShape) -> float:
    """Point beyond which U is strictly negative: 18 (b/a)^2 lnln(3b/a)."""
    _require_ratio(shape)
    if (shape.c / shape.b) ** 2 >= E_E:
        raise OffsetTooLarge(f"(c/b)^2 = {(shape.c / shape.b) ** 2:.6g} >= e^e")
    r = shape.ratio
    return 18.0 * r * r * math.log(math.log(3.0 * r))


def bracket_xstar(shape: UShape) -> tuple[float, float]:
    """Analytic bracket [alpha^2 lnln alpha, 4 alpha^2 lnln alpha], alpha = b/a."""
    _require_ratio(shape)
    alpha = shape.ratio
    base = alpha * alpha * math.log(math.log(alpha))
    return base, 4.0 * base


def solve_x_over_lnln(target: float, upper: float | None = None) -> float:
    """Unique x >= e^e with x / lnln(x) = target (bisection)."""
    h = lambda x: x / math.log(math.log(x)) - target
    if h(E_E) >= 0:
        return E_E
    hi = upper if upper is not None else 10.0 * 4.0 * target * max(math.log(math.log(math.sqrt(target))), 1.0)
    while h(hi) < 0:
        hi *= 2.0
    return bisect(h, E_E, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500)


def stationary_point(shape: UShape) -> float | None:
    """Root of dU/dx above e^e, or None if U is decreasing on the whole branch."""
    if u_derivative(shape, E_E * (1 + 1e-12)) <= 0:
        return None
    hi = default_search_cap(shape)
    while u_derivative(shape, hi) > 0:
        hi *= 2.0
    return bisect(lambda x: u_derivative(shape, x), E_E * (1 + 1e-12), hi,
                  xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500)
