"""Sample-path records shared by the simulators, the certifiers and the CLI."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TscPath:
    """Interarrival times ``u`` (length n) and service times ``v`` (J x n)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        if u.ndim != 1:
            raise ValueError("u must be one-dimensional")
        if np.any(u < 0) or np.any(v < 0):
            raise ValueError("interarrival and service times must be nonnegative")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def J(self) -> int:
        return self.v.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u"] + [f"v_{j + 1}" for j in range(self.J)])
            for k in range(self.n):
                w.writerow([repr(float(self.u[k]))] + [repr(float(x)) for x in self.v[:, k]])

    @classmethod
    def from_csv(cls, path) -> "TscPath":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], [r for r in rows[1:] if r]
        if not header or header[0].strip() != "u":
            raise ValueError(f"{path}: header must start with 'u'")
        data = np.array([[float(x) for x in r] for r in body], dtype=float)
        if data.shape[1] != len(header):
            raise ValueError(f"{path}: rows do not match header width")
        return cls(u=data[:, 0], v=data[:, 1:].T)


@dataclass(frozen=True)
class McssPath:
    """Per-class interarrival and service sequences.

    ``u[j]`` is empty for a class without external arrivals. ``v[j][i]`` is the
    service time of the i-th job (0-based) that visits class j, counting jobs
    in order of their entry into the system.
    """

    u: tuple
    v: tuple
    horizon: float

    def __post_init__(self):
        u = tuple(np.asarray(x, dtype=float).ravel() for x in self.u)
        v = tuple(np.asarray(x, dtype=float).ravel() for x in self.v)
        if len(u) != len(v):
            raise ValueError("u and v must have one sequence per class")
        if any(np.any(x < 0) for x in u + v):
            raise ValueError("sequences must be nonnegative")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def J(self) -> int:
        return len(self.u)

    def arrival_epochs(self, j: int) -> np.ndarray:
        return np.cumsum(self.u[j])


@dataclass
class WorkloadTrace:
    """Right-continuous piecewise-linear workload.

    ``values[k]`` is W just after every jump at ``times[k]``; between events W
    falls at unit rate and stops at zero.
    """

    times: np.ndarray
    values: np.ndarray
    t_end: float

    def at(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.times) - 1)
        out = np.maximum(self.values[idx] - (t - self.times[idx]), 0.0)
        return float(out) if out.ndim == 0 else out

    @staticmethod
    def _area(w, length):
        # integral over [0, length] of max(w - s, 0) ds
        return np.where(w >= length, w * length - 0.5 * length**2, 0.5 * w * w)

    def integral(self, t_end: float | None = None) -> float:
        """Exact integral of W over [0, t_end]."""
        t_end = self.t_end if t_end is None else float(t_end)
        k = np.searchsorted(self.times, t_end, side="right")
        starts = self.times[:k]
        ends = np.append(self.times[1:k], t_end)
        return math.fsum(self._area(self.values[:k], ends - starts).tolist())

    def integral_at(self, ts) -> np.ndarray:
        """Integral of W over [0, t] for every t in ``ts`` (vectorised)."""
        ts = np.asarray(ts, dtype=float)
        seg = self._area(self.values[:-1], np.diff(self.times))
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        idx = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, len(self.times) - 1)
        return cum[idx] + self._area(self.values[idx], ts - self.times[idx])


@dataclass
class BusyPeriodLog:
    """Completed busy periods in time order.

    ``idles[i]`` is NaN when the idle period following busy period i was still
    running at the horizon.
    """

    starts: list = field(default_factory=list)
    busy: list = field(default_factory=list)
    idles: list = field(default_factory=list)
    peaks: list = field(default_factory=list)
    work: list = field(default_factory=list)  # service brought in during each period
    censored_start: float | None = None  # start of a busy period cut off by the horizon

    def __len__(self) -> int:
        return len(self.busy)

    def n_of_t(self, t: float) -> int:
        """Number of busy periods started strictly before t (the one at 0 always counts)."""
        starts = list(self.starts)
        if self.censored_start is not None:
            starts.append(self.censored_start)
        return max(int(np.searchsorted(np.asarray(starts), t, side="left")), 1)

    def rows(self):
        for s, b, i, p in zip(self.starts, self.busy, self.idles, self.peaks):
            yield s, b, i, p

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["start", "B", "I", "peakW"])
            for s, b, i, p in self.rows():
                w.writerow([repr(s), repr(b), "" if math.isnan(i) else repr(i), repr(p)])
