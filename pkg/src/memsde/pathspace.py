"""Pasts, futures, concatenation and shifts on a uniform time grid.

A past (an element of C^-) is stored newest-first: ``samples[k]`` is the
value at time ``origin_time - k*dt``.  A future is stored oldest-first:
``samples[k]`` is the value at ``origin_time + k*dt``.  Values before the
oldest stored past sample follow the path's extension policy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ContractViolation, OutOfRangeError

EXTENSIONS = ("constant", "zero")

__all__ = [
    "HistoryPath",
    "FuturePath",
    "FullPath",
    "FluctuationSeries",
    "NiceLevel",
    "snap_index",
    "shift_view",
    "concat",
    "weighted_norm",
    "fluctuation_series",
    "nice_level",
]


def snap_index(t: float, dt: float) -> int:
    """Nearest grid index to ``t/dt``, ties rounded away from zero."""
    q = t / dt
    return int(math.copysign(math.floor(abs(q) + 0.5), q))


def _as_samples(samples) -> np.ndarray:
    arr = np.array(samples, dtype=float)  # always a private copy
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ContractViolation(f"samples must have shape (n, dim) with n >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("samples must be finite")
    arr.setflags(write=False)
    return arr


def _check_dt(dt: float) -> float:
    dt = float(dt)
    if not (dt > 0 and math.isfinite(dt)):
        raise ContractViolation(f"dt must be positive and finite, got {dt}")
    return dt


@dataclass(frozen=True, eq=False)
class HistoryPath:
    """A past on the window ``[origin_time - (n-1)*dt, origin_time]``, newest sample first."""

    samples: np.ndarray
    dt: float
    extension: str = "constant"
    origin_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_samples(self.samples))
        object.__setattr__(self, "dt", _check_dt(self.dt))
        if self.extension not in EXTENSIONS:
            raise ContractViolation(f"extension must be one of {EXTENSIONS}, got {self.extension!r}")
        object.__setattr__(self, "origin_time", float(self.origin_time))

    @classmethod
    def constant(cls, value, dt, window, extension="constant", dim=None):
        """Constant past of length ``window`` (time units)."""
        value = np.atleast_1d(np.asarray(value, dtype=float))
        if dim is not None and value.size == 1:
            value = np.full(dim, value[0])
        n = snap_index(window, dt) + 1
        return cls(np.tile(value, (n, 1)), dt, extension)

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], dt, window, extension="constant"):
        """Sample ``f`` at times ``0, -dt, ..., -window``; ``f`` receives the time array."""
        n = snap_index(window, dt) + 1
        t = -dt * np.arange(n)
        return cls(np.asarray(f(t), dtype=float), dt, extension)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def present(self) -> np.ndarray:
        return self.samples[0]

    @property
    def window(self) -> float:
        return (self.n - 1) * self.dt

    def lags(self) -> np.ndarray:
        """Nonnegative lags ``k*dt`` of the stored samples."""
        return self.dt * np.arange(self.n)

    def times(self) -> np.ndarray:
        return self.origin_time - self.lags()

    def tail_value(self) -> np.ndarray:
        """Value assigned by the extension policy beyond the stored window."""
        if self.extension == "zero":
            return np.zeros(self.dim)
        return self.samples[-1].copy()

    def padded(self, n: int) -> np.ndarray:
        """First ``n`` samples (newest first), extended past the window if needed."""
        if n <= self.n:
            return self.samples[:n]
        tail = np.tile(self.tail_value(), (n - self.n, 1))
        return np.concatenate([self.samples, tail])

    def value_at_lag(self, lag: float) -> np.ndarray:
        k = snap_index(lag, self.dt)
        if k < 0:
            raise OutOfRangeError(f"negative lag {lag}")
        if k < self.n:
            return self.samples[k]
        return self.tail_value()

    def with_samples(self, samples) -> "HistoryPath":
        return HistoryPath(samples, self.dt, self.extension, self.origin_time)

    def __mul__(self, scale: float) -> "HistoryPath":
        return self.with_samples(self.samples * scale)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class FuturePath:
    """A future on ``[origin_time, origin_time + (n-1)*dt]``, oldest sample first."""

    samples: np.ndarray
    dt: float
    origin_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_samples(self.samples))
        object.__setattr__(self, "dt", _check_dt(self.dt))
        object.__setattr__(self, "origin_time", float(self.origin_time))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def horizon(self) -> float:
        return (self.n - 1) * self.dt

    def times(self) -> np.ndarray:
        return self.origin_time + self.dt * np.arange(self.n)


@dataclass(frozen=True, eq=False)
class FullPath:
    """Concatenation ``x:y`` of a past and a future sharing the value at time 0."""

    past: HistoryPath
    future: FuturePath

    def __post_init__(self):
        x, y = self.past, self.future
        if x.dim != y.dim:
            raise ContractViolation(f"dimension mismatch: past {x.dim}, future {y.dim}")
        if x.dt != y.dt:
            raise ContractViolation(f"dt mismatch: past {x.dt!r}, future {y.dt!r}")
        if x.origin_time != y.origin_time:
            raise ContractViolation(
                f"origin mismatch: past {x.origin_time!r}, future {y.origin_time!r}"
            )
        if not np.array_equal(x.samples[0], y.samples[0]):
            raise ContractViolation(
                f"concatenation endpoint mismatch: past ends at {x.samples[0].tolist()}, "
                f"future starts at {y.samples[0].tolist()}"
            )

    @property
    def dt(self) -> float:
        return self.past.dt

    @property
    def dim(self) -> int:
        return self.past.dim

    @property
    def origin_time(self) -> float:
        return self.past.origin_time

    @property
    def index0(self) -> int:
        """Position of time 0 in :meth:`chronological`."""
        return self.past.n - 1

    def chronological(self) -> np.ndarray:
        """All stored samples, oldest first."""
        return np.concatenate([self.past.samples[::-1], self.future.samples[1:]])

    def times(self) -> np.ndarray:
        k = np.arange(-(self.past.n - 1), self.future.n)
        return self.origin_time + self.dt * k

    def value_at(self, t: float) -> np.ndarray:
        k = snap_index(t - self.origin_time, self.dt)
        if k >= 0:
            if k >= self.future.n:
                raise OutOfRangeError(f"t={t} beyond future horizon {self.future.horizon}")
            return self.future.samples[k]
        return self.past.value_at_lag(-k * self.dt)


def concat(x: HistoryPath, y: FuturePath) -> FullPath:
    """The path equal to ``x`` on t<0 and ``y`` on t>=0; endpoints must match exactly."""
    return FullPath(x, y)


def shift_view(p, t: float) -> HistoryPath:
    """The past seen from time ``t``: sample ``k`` is ``p(t - k*dt)``.

    ``t`` is measured from the path's origin and snapped to the nearest grid
    point.  ``p`` may be a :class:`FullPath` or a :class:`HistoryPath` (then
    only ``t <= 0`` is allowed).
    """
    if isinstance(p, HistoryPath):
        p = FullPath(p, FuturePath(p.samples[:1], p.dt, p.origin_time))
    k = snap_index(t, p.dt)
    if k >= p.future.n:
        raise OutOfRangeError(f"t={t} beyond stored future horizon {p.future.horizon}")
    if k < -(p.past.n - 1):
        raise OutOfRangeError(f"t={t} before stored past window {-p.past.window}")
    z = p.chronological()
    i = p.index0 + k
    return HistoryPath(z[i::-1], p.dt, p.past.extension, p.origin_time + k * p.dt)


def weighted_norm(x: HistoryPath, rho: float) -> float:
    """``sup_t |x(t)| / (1 + |t|^rho)`` over the grid plus the extension tail."""
    if not rho > 0:
        raise ContractViolation(f"rho must be positive, got {rho}")
    lags = x.lags()
    vals = np.linalg.norm(x.samples, axis=1) / (1.0 + lags**rho)
    # constant tail: |c|/(1+|t|^rho) is decreasing, its sup sits at the window edge
    tail = np.linalg.norm(x.tail_value()) / (1.0 + lags[-1] ** rho)
    return float(max(vals.max(), tail))


class FluctuationSeries(NamedTuple):
    times: np.ndarray
    values: np.ndarray
    constants: tuple


def _trapezoid_cumulative(g: np.ndarray, dt: float) -> np.ndarray:
    out = np.empty(g.shape[0])
    out[0] = 0.0
    np.cumsum(0.5 * dt * (g[:-1] + g[1:]), out=out[1:])
    return out


def fluctuation_series(v, dt: float, C1: float, C2: float, gamma: float) -> FluctuationSeries:
    """``FV(t) = |int_0^t V^gamma ds| - (C1/C2)|t|`` on the grid ``t = 0, -dt, ...``.

    ``v`` holds V-values newest first.  The integral is the cumulative
    trapezoid rule, so ``FV(0) = 0``.
    """
    if not (C2 > 0 and gamma > 0 and C1 >= 0):
        raise ContractViolation("need C1 >= 0, C2 > 0, gamma > 0")
    v = np.asarray(v, dtype=float)
    g = v**gamma
    integral = _trapezoid_cumulative(g, dt)
    lags = dt * np.arange(v.shape[0])
    return FluctuationSeries(-lags, np.abs(integral) - (C1 / C2) * lags, (C1, C2, gamma))


class NiceLevel(NamedTuple):
    sup: float
    level: float  # integer-valued, or inf when the tail sup diverges


def nice_level(
    x: HistoryPath,
    v,
    rho: float,
    r: float,
    C1: float,
    C2: float,
    gamma: float,
    tail: bool = True,
) -> NiceLevel:
    """Smallest ``n`` with ``x`` in the nice set A_n(rho, r), with the sup that decides it.

    The tail beyond the window assumes ``x`` and ``v`` follow ``x``'s
    extension policy (constant: last value, zero: 0).  A tail whose
    fluctuation grows faster than ``|t|^r`` gives an infinite level.
    """
    if not rho > 0:
        raise ContractViolation("rho must be positive")
    v = np.asarray(v, dtype=float)
    if v.shape[0] != x.n:
        raise ContractViolation(f"need one V-value per sample ({x.n}), got {v.shape[0]}")
    fv = fluctuation_series(v, x.dt, C1, C2, gamma).values
    lags = x.lags()
    xn = np.linalg.norm(x.samples, axis=1)
    vals = xn / (1.0 + lags**rho) + (np.abs(v) + np.abs(fv)) / (1.0 + lags**r)
    sup = float(vals.max())
    if tail:
        sup = max(sup, _nice_tail_sup(x, v, fv, rho, r, C1 / C2, gamma))
    level = math.floor(sup) + 1.0 if math.isfinite(sup) else math.inf
    return NiceLevel(sup, level)


def _nice_tail_sup(x, v, fv, rho, r, ratio, gamma) -> float:
    L = x.window
    if L == 0:
        return 0.0
    cx = float(np.linalg.norm(x.tail_value()))
    vt = 0.0 if x.extension == "zero" else float(v[-1])
    integral_L = fv[-1] + ratio * L  # |int_0^{-L} V^gamma|, the integrand is nonnegative
    slope = abs(vt) ** gamma - ratio
    if slope != 0 and r < 1:
        return math.inf
    tau = L * np.geomspace(1.0, 1e8, 4001)[1:]
    fv_tail = integral_L + abs(vt) ** gamma * (tau - L) - ratio * tau
    g = cx / (1.0 + tau**rho) + (abs(vt) + np.abs(fv_tail)) / (1.0 + tau**r)
    limit = abs(slope) if r == 1 else 0.0
    return float(max(g.max(), limit))
