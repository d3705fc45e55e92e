"""Memory drift functionals ``a: C^- -> R^d``.

Every drift evaluates on a past given newest-first (``evaluate_samples``).
Bulk evaluation along a path (``along``) and incremental evaluation while a
path is being generated (``streamer``) are specialised for the built-in
kernels so long simulations stay linear in the number of steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.signal import oaconvolve
from scipy.special import erfc, logsumexp

from . import _kernels
from .errors import ContractViolation, DivergenceError, UnsupportedOperation
from .pathspace import FuturePath, HistoryPath, concat, shift_view, snap_index

__all__ = [
    "GrowthBound",
    "MemoryDrift",
    "MarkovDrift",
    "MarkovLinearDrift",
    "GaussianKernelDrift",
    "PathDependentKernelDrift",
    "GAUSSIAN_KERNEL_MASS",
    "eval_gaussian_kernel_drift",
    "eval_pathdep_kernel_drift",
    "eval_markov_drift",
    "drift_gap",
    "verify_growth_bound",
    "GrowthReport",
]

# int_0^inf exp(-u^2 - u) du, the mass of the Gaussian memory kernel
GAUSSIAN_KERNEL_MASS = math.exp(0.25) * math.sqrt(math.pi) / 2 * erfc(0.5)


@dataclass(frozen=True)
class GrowthBound:
    """Declared bound ``|a(x)| <= K + sum_i weight_i |V(pi_{-lag_i} x)|^beta``."""

    K: float
    beta: float
    nu_weights: tuple = ((0.0, 1.0),)


class MemoryDrift:
    """Base class.  Subclasses implement :meth:`evaluate_samples`."""

    kind = "custom"

    def __init__(self, dim: int, growth: GrowthBound | None = None, kernel_tail_tol: float = 1e-12):
        if dim < 1:
            raise ContractViolation("dim must be positive")
        if not kernel_tail_tol > 0:
            raise ContractViolation("kernel_tail_tol must be positive")
        self.dim = int(dim)
        self.growth = growth
        self.kernel_tail_tol = float(kernel_tail_tol)

    # -- required -------------------------------------------------------
    def evaluate_samples(self, samples: np.ndarray, dt: float, extension: str) -> np.ndarray:
        raise NotImplementedError

    # -- optional ---------------------------------------------------------
    def lookback(self, dt: float) -> int | None:
        """Samples (present included) the drift reads; ``None`` means the whole stored past."""
        return 1

    def guard_samples(self, samples: np.ndarray, dt: float, extension: str) -> float:
        """Quantity watched by the blowup guard (a Lyapunov value when one is known)."""
        return float(np.linalg.norm(samples[0]))

    # -- derived --------------------------------------------------------
    def view(self, x: HistoryPath) -> np.ndarray:
        n = self.lookback(x.dt)
        return x.samples if n is None else x.padded(n)

    def evaluate(self, x: HistoryPath) -> np.ndarray:
        if x.dim != self.dim:
            raise ContractViolation(f"drift has dim {self.dim}, path has dim {x.dim}")
        return np.asarray(self.evaluate_samples(self.view(x), x.dt, x.extension), dtype=float)

    __call__ = evaluate

    def guard(self, x: HistoryPath) -> float:
        return self.guard_samples(self.view(x), x.dt, x.extension)

    def streamer(self, past: HistoryPath) -> "Streamer":
        return Streamer(self, past)

    def guard_along(self, past: HistoryPath, future: np.ndarray) -> np.ndarray:
        """Guard value at every future grid point (see :meth:`guard_samples`)."""
        future = np.asarray(future, dtype=float).reshape(-1, self.dim)
        st = self.streamer(past)
        out = np.empty(future.shape[0])
        out[0] = st.guard()
        for k in range(1, future.shape[0]):
            st.push(future[k])
            out[k] = st.guard()
        return out

    def along(self, past: HistoryPath, future: np.ndarray) -> np.ndarray:
        """Drift at every future grid point ``0..m-1`` of ``past:future``.

        ``future`` has shape ``(m, dim)`` with ``future[0]`` equal to the
        present of ``past``.
        """
        future = np.asarray(future, dtype=float).reshape(-1, self.dim)
        st = self.streamer(past)
        out = np.empty_like(future)
        out[0] = st.drift()
        for k in range(1, future.shape[0]):
            st.push(future[k])
            out[k] = st.drift()
        return out


class Streamer:
    """Incremental drift evaluation while a path is extended one sample at a time.

    The generic version keeps a chronological buffer and re-evaluates the
    drift on a newest-first view of it.
    """

    def __init__(self, drift: MemoryDrift, past: HistoryPath):
        self.drift_fn = drift
        self.dt = past.dt
        self.extension = past.extension
        n = drift.lookback(past.dt)
        hist = past.samples if n is None else past.padded(n)
        self._n = n
        cap = max(16, 2 * hist.shape[0])
        self._buf = np.empty((cap, past.dim))
        self._len = hist.shape[0]
        self._buf[: self._len] = hist[::-1]

    def _view(self) -> np.ndarray:
        start = 0 if self._n is None else self._len - self._n
        # newest first, no copy
        return self._buf[self._len - 1 : (start - 1 if start > 0 else None) : -1]

    def push(self, value) -> None:
        if self._len == self._buf.shape[0]:
            if self._n is not None:
                keep = self._n
                self._buf[:keep] = self._buf[self._len - keep : self._len]
                self._len = keep
            else:
                grown = np.empty((2 * self._buf.shape[0], self._buf.shape[1]))
                grown[: self._len] = self._buf[: self._len]
                self._buf = grown
        self._buf[self._len] = value
        self._len += 1

    def drift(self) -> np.ndarray:
        return np.asarray(self.drift_fn.evaluate_samples(self._view(), self.dt, self.extension), dtype=float)

    def guard(self) -> float:
        return self.drift_fn.guard_samples(self._view(), self.dt, self.extension)


# ---------------------------------------------------------------------------
# Markov drifts


class MarkovDrift(MemoryDrift):
    """``a(x) = g(x(0))``: the present-only case."""

    kind = "markov"

    def __init__(self, g: Callable[[np.ndarray], np.ndarray], dim: int = 1, vectorized: bool = False, **kw):
        super().__init__(dim, **kw)
        self.g = g
        self.vectorized = vectorized

    def evaluate_samples(self, samples, dt, extension):
        return np.asarray(self.g(samples[0]), dtype=float).reshape(self.dim)

    def guard_samples(self, samples, dt, extension):
        return float(samples[0] @ samples[0])

    def guard_along(self, past, future):
        future = np.asarray(future, dtype=float).reshape(-1, self.dim)
        return np.einsum("ij,ij->i", future, future)

    def along(self, past, future):
        future = np.asarray(future, dtype=float).reshape(-1, self.dim)
        if self.vectorized:
            return np.asarray(self.g(future), dtype=float).reshape(future.shape)
        return np.array([self.evaluate_samples(row[None, :], 0.0, "") for row in future])


class MarkovLinearDrift(MarkovDrift):
    """``a(x) = A x(0) + b``.  Covers the OU drift, constants and the explosive ``+x`` case."""

    kind = "markov_linear"

    def __init__(self, A=-1.0, b=0.0, dim: int | None = None, **kw):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if dim is None:
            dim = A.shape[0] if A.size > 1 else np.atleast_1d(b).size
        if A.size == 1:
            A = A[0, 0] * np.eye(dim)
        b = np.broadcast_to(np.asarray(b, dtype=float), (dim,)).copy()
        if A.shape != (dim, dim):
            raise ContractViolation(f"A must be {dim}x{dim}")
        self.A = A
        self.b = b
        super().__init__(lambda x: x @ self.A.T + self.b, dim=dim, vectorized=True, **kw)

    def euler_fast(self, past, dW, dt, radius):
        x0 = np.array(past.samples[0], dtype=float)
        return _kernels.em_markov_linear(x0, self.A, self.b, np.ascontiguousarray(dW), dt, radius)


def eval_markov_drift(g, x: HistoryPath) -> np.ndarray:
    """``g(x(0))``."""
    return np.asarray(g(x.samples[0]), dtype=float)


# ---------------------------------------------------------------------------
# Gaussian memory kernel: a(x) = -x(0) (1 + int e^{-s^2+s} x(s)^2 ds)


class GaussianKernelDrift(MemoryDrift):
    """``a(x) = -x(0)(1 + Psi(x))`` with ``Psi(x) = int_{-inf}^0 e^{-s^2+s} x(s)^2 ds``.

    ``Psi`` is the trapezoid rule on the grid, truncated at the lag where the
    kernel drops below ``kernel_tail_tol``.
    """

    kind = "gaussian_kernel"

    def __init__(self, kernel_tail_tol: float = 1e-12, growth: GrowthBound | None = None):
        # |x0|(1+Psi) <= 1/2 + x0^2 + Psi^2/2 <= 1/2 + V with V = x0^2 + Psi^2
        growth = growth or GrowthBound(K=0.5, beta=1.0, nu_weights=((0.0, 1.0),))
        super().__init__(1, growth=growth, kernel_tail_tol=kernel_tail_tol)
        self._weights = {}

    @property
    def truncation_lag(self) -> float:
        return (-1.0 + math.sqrt(1.0 + 4.0 * math.log(1.0 / self.kernel_tail_tol))) / 2.0

    def lookback(self, dt):
        return int(math.ceil(self.truncation_lag / dt)) + 1

    def weights(self, dt: float) -> np.ndarray:
        w = self._weights.get(dt)
        if w is None:
            u = dt * np.arange(self.lookback(dt))
            w = dt * np.exp(-u * u - u)
            w[0] *= 0.5
            w[-1] *= 0.5
            w.setflags(write=False)
            self._weights[dt] = w
        return w

    def psi_samples(self, samples, dt) -> float:
        x = samples[:, 0]
        return float(self.weights(dt) @ (x * x))

    def psi(self, x: HistoryPath) -> float:
        return self.psi_samples(self.view(x), x.dt)

    def evaluate_samples(self, samples, dt, extension):
        x0 = samples[0, 0]
        return np.array([-x0 * (1.0 + self.psi_samples(samples, dt))])

    def guard_samples(self, samples, dt, extension):
        psi = self.psi_samples(samples, dt)
        return float(samples[0, 0] ** 2 + psi**2)

    def _chronological(self, past, future):
        n = self.lookback(past.dt)
        hist = past.padded(max(n, past.n))[::-1, 0]
        future = np.asarray(future, dtype=float).reshape(-1)
        return np.concatenate([hist, future[1:]]), hist.shape[0] - 1

    def psi_along(self, past: HistoryPath, future) -> np.ndarray:
        """``Psi`` at each future grid point, by FFT convolution."""
        z, i0 = self._chronological(past, future)
        conv = oaconvolve(z * z, self.weights(past.dt), mode="full")[: z.shape[0]]
        return conv[i0:]

    def guard_along(self, past, future):
        future = np.asarray(future, dtype=float).reshape(-1)
        return future**2 + self.psi_along(past, future) ** 2

    def along(self, past, future):
        future = np.asarray(future, dtype=float).reshape(-1)
        psi = self.psi_along(past, future)
        return (-future * (1.0 + psi))[:, None]

    def euler_fast(self, past, dW, dt, radius):
        w = self.weights(dt)
        hist = past.padded(w.shape[0])[:, 0]
        return _kernels.em_gaussian_kernel(hist * hist, float(hist[0]), w, np.ascontiguousarray(dW[:, 0]), dt, radius)


def eval_gaussian_kernel_drift(x: HistoryPath, kernel_tail_tol: float = 1e-12) -> np.ndarray:
    return GaussianKernelDrift(kernel_tail_tol)(x)


# ---------------------------------------------------------------------------
# Path-dependent kernel: Psi_hat(x) = int exp(-2|s| - int_{-|s|}^0 x dr) x(s)^2 ds


class PathDependentKernelDrift(MemoryDrift):
    """``a(x) = -x(0)[1 + Psi(x)] + Psi(x)^2``, ``Psi = Psi_hat`` when below ``finiteness_cap``, else 0.

    The inner integral is a trapezoid prefix sum, the outer one a trapezoid
    rule over the whole stored past plus the exact tail of the extension
    policy (for a constant tail ``c`` the tail is finite only if ``c > -2``).
    """

    kind = "pathdep_kernel"

    def __init__(self, finiteness_cap: float = 1e12, growth: GrowthBound | None = None, kernel_tail_tol: float = 1e-12):
        if not finiteness_cap > 0:
            raise ContractViolation("finiteness_cap must be positive")
        # |x0|(1+Psi) + Psi^2 <= 1/2 + x0^2 + 3/2 Psi^2 <= 1/2 + 3/2 V
        growth = growth or GrowthBound(K=0.5, beta=1.0, nu_weights=((0.0, 1.5),))
        super().__init__(1, growth=growth, kernel_tail_tol=kernel_tail_tol)
        self.finiteness_cap = float(finiteness_cap)

    def lookback(self, dt):
        return None

    def log_psi_hat_samples(self, samples, dt, extension, strict=False) -> float:
        x = samples[:, 0]
        n = x.shape[0]
        prefix = np.zeros(n)
        if n > 1:
            np.cumsum(0.5 * dt * (x[:-1] + x[1:]), out=prefix[1:])
        lags = dt * np.arange(n)
        expo = -2.0 * lags - prefix
        with np.errstate(divide="ignore"):
            log_terms = expo + np.log(x * x)
        if strict:
            bad = np.flatnonzero(log_terms > 709.0)
            if bad.size:
                raise DivergenceError(
                    f"kernel exponent overflows at lag {lags[bad[0]]:.6g}", lag=float(lags[bad[0]])
                )
        ow = np.full(n, dt)
        ow[0] *= 0.5
        ow[-1] *= 0.5
        if n == 1:
            ow[0] = 0.0
        with np.errstate(divide="ignore"):
            parts = [log_terms + np.log(ow)]
        c = 0.0 if extension == "zero" else x[-1]
        if c != 0.0:
            if c <= -2.0:
                return math.inf
            # int_L^inf exp(-2u - P_L - c(u-L)) c^2 du
            parts.append(np.array([expo[-1] + 2.0 * math.log(abs(c)) - math.log(2.0 + c)]))
        return float(logsumexp(np.concatenate(parts)))

    def psi_hat_samples(self, samples, dt, extension, strict=False) -> float:
        lp = self.log_psi_hat_samples(samples, dt, extension, strict)
        return math.inf if lp > 709.0 else math.exp(lp)

    def psi_hat(self, x: HistoryPath, strict: bool = False) -> float:
        """``Psi_hat``; +inf when divergent.  ``strict`` raises on exponent overflow instead."""
        return self.psi_hat_samples(x.samples, x.dt, x.extension, strict)

    def _capped(self, psi_hat: float) -> float:
        return psi_hat if psi_hat < self.finiteness_cap else 0.0

    def evaluate_samples(self, samples, dt, extension):
        psi = self._capped(self.psi_hat_samples(samples, dt, extension))
        x0 = samples[0, 0]
        return np.array([-x0 * (1.0 + psi) + psi * psi])

    def guard_samples(self, samples, dt, extension):
        ph = self.psi_hat_samples(samples, dt, extension)
        return float(samples[0, 0] ** 2 + ph * ph)

    def _log_s0(self, past: HistoryPath) -> float:
        lp = self.log_psi_hat_samples(past.samples, past.dt, past.extension)
        x0 = past.samples[0, 0]
        fresh = math.log(0.5 * past.dt * x0 * x0) if x0 != 0.0 else -math.inf
        return float(np.logaddexp(lp, fresh))

    def psi_hat_along(self, past: HistoryPath, future) -> np.ndarray:
        future = np.ascontiguousarray(np.asarray(future, dtype=float).reshape(-1))
        log_s = _kernels.pathdep_log_s_series(future, self._log_s0(past), past.dt)
        with np.errstate(over="ignore"):
            return np.where(log_s > 709.0, np.inf, np.exp(np.minimum(log_s, 709.0)) - 0.5 * past.dt * future**2)

    def guard_along(self, past, future):
        future = np.asarray(future, dtype=float).reshape(-1)
        with np.errstate(over="ignore"):
            return future**2 + self.psi_hat_along(past, future) ** 2

    def along(self, past, future):
        future = np.asarray(future, dtype=float).reshape(-1)
        ph = self.psi_hat_along(past, future)
        psi = np.where(ph < self.finiteness_cap, ph, 0.0)
        return (-future * (1.0 + psi) + psi * psi)[:, None]

    def euler_fast(self, past, dW, dt, radius):
        return _kernels.em_pathdep_kernel(
            self._log_s0(past), float(past.samples[0, 0]), np.ascontiguousarray(dW[:, 0]), dt, self.finiteness_cap, radius
        )


def eval_pathdep_kernel_drift(x: HistoryPath, finiteness_cap: float = 1e12) -> np.ndarray:
    return PathDependentKernelDrift(finiteness_cap)(x)


# ---------------------------------------------------------------------------
# probes


def drift_gap(a: MemoryDrift, x1: HistoryPath, x2: HistoryPath, y: FuturePath, t: float) -> float:
    """``|a(pi_t(x1:y)) - a(pi_t(x2:y))|``."""
    if snap_index(t, y.dt) < 0:
        raise ContractViolation("t must be nonnegative")
    p1 = shift_view(concat(x1, y), t)
    p2 = shift_view(concat(x2, y), t)
    return float(np.linalg.norm(a(p1) - a(p2)))


class GrowthReport(NamedTuple):
    lhs: float
    rhs: float
    ok: bool


def verify_growth_bound(a: MemoryDrift, v, x: HistoryPath, tol: float = 1e-12) -> GrowthReport:
    """Check ``|a(x)| <= K + sum weight * |V(pi_{-lag} x)|^beta`` with ``v`` the V-values newest first."""
    if a.growth is None:
        raise UnsupportedOperation(f"{type(a).__name__} declares no growth bound")
    v = np.asarray(v, dtype=float)
    g = a.growth
    lhs = float(np.linalg.norm(a(x)))
    rhs = g.K
    for lag, weight in g.nu_weights:
        k = snap_index(lag, x.dt)
        vk = v[k] if k < v.shape[0] else v[-1]
        rhs += weight * abs(vk) ** g.beta
    return GrowthReport(lhs, float(rhs), bool(lhs <= rhs + tol))
