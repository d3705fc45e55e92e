"""Wiener paths and solvers for ``dX = a(pi_t X) dt + dW`` with a given past."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .drift import MemoryDrift
from .errors import BlowupError, ContractionFailure, ContractViolation
from .pathspace import FuturePath, HistoryPath, snap_index

__all__ = [
    "WienerPath",
    "SolverConfig",
    "PicardChunk",
    "sample_wiener",
    "make_rng",
    "euler_maruyama",
    "picard_iterate",
    "picard_solve",
    "solve_cauchy",
]


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based generator for stream ``stream_id`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class WienerPath:
    dim: int
    dt: float
    increments: np.ndarray  # (n_steps, dim)
    seed: int = 0
    stream_id: int = 0

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    def values(self, start=None) -> np.ndarray:
        """``W`` on the grid, ``W(0) = start`` (default zero)."""
        w0 = np.zeros((1, self.dim)) if start is None else np.atleast_2d(np.asarray(start, dtype=float))
        return np.cumsum(np.concatenate([w0, self.increments]), axis=0)

    def coarsen(self, factor: int = 2) -> "WienerPath":
        """The same Brownian path seen on a grid ``factor`` times coarser."""
        n = self.n_steps // factor
        inc = self.increments[: n * factor].reshape(n, factor, self.dim).sum(axis=1)
        return WienerPath(self.dim, self.dt * factor, inc, self.seed, self.stream_id)

    def head(self, n_steps: int) -> "WienerPath":
        return WienerPath(self.dim, self.dt, self.increments[:n_steps], self.seed, self.stream_id)


def sample_wiener(seed: int, stream_id: int, dim: int, dt: float, n_steps: int) -> WienerPath:
    if not dt > 0:
        raise ContractViolation("dt must be positive")
    z = make_rng(seed, stream_id).standard_normal((int(n_steps), int(dim)))
    inc = z * math.sqrt(dt)
    inc.setflags(write=False)
    return WienerPath(int(dim), float(dt), inc, int(seed), int(stream_id))


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    horizon: float
    blowup_radius: float = 1e12
    picard_tol: float = 1e-10
    picard_max_iter: int = 100
    picard_chunk: float = 1.0
    picard_min_chunk: float = 1e-3

    def __post_init__(self):
        for name in ("dt", "horizon", "blowup_radius", "picard_tol", "picard_chunk", "picard_min_chunk"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")
        if self.picard_max_iter < 1:
            raise ContractViolation("picard_max_iter must be at least 1")

    @property
    def n_steps(self) -> int:
        return snap_index(self.horizon, self.dt)


def _check_inputs(a: MemoryDrift, past: HistoryPath, w: WienerPath, cfg: SolverConfig) -> int:
    if not (past.dt == w.dt == cfg.dt):
        raise ContractViolation(f"dt mismatch: past {past.dt}, noise {w.dt}, config {cfg.dt}")
    if not (a.dim == past.dim == w.dim):
        raise ContractViolation(f"dimension mismatch: drift {a.dim}, past {past.dim}, noise {w.dim}")
    n = cfg.n_steps
    if w.n_steps < n:
        raise ContractViolation(f"noise has {w.n_steps} steps, horizon needs {n}")
    return n


def euler_maruyama(a: MemoryDrift, past: HistoryPath, w: WienerPath, cfg: SolverConfig) -> FuturePath:
    """``X_{k+1} = X_k + a(pi_{t_k} X) dt + dW_k`` until the horizon.

    Raises :class:`BlowupError` at the first step whose guard value (the
    drift's Lyapunov value when it has one) reaches ``cfg.blowup_radius``;
    the partial path is attached as ``err.partial``.
    """
    n = _check_inputs(a, past, w, cfg)
    dW = np.asarray(w.increments[:n], dtype=float)
    fast = getattr(a, "euler_fast", None)
    if fast is not None:
        path, stop, g = fast(past, dW, cfg.dt, cfg.blowup_radius)
        path = path.reshape(n + 1, a.dim)
    else:
        path, stop, g = _euler_generic(a, past, dW, cfg.dt, cfg.blowup_radius)
    if stop >= 0:
        err = BlowupError(stop, past.origin_time + stop * cfg.dt, g, cfg.blowup_radius)
        err.partial = path[: stop + 1]
        raise err
    return FuturePath(path, cfg.dt, past.origin_time)


def _euler_generic(a, past, dW, dt, radius):
    n = dW.shape[0]
    path = np.full((n + 1, a.dim), np.nan)
    st = a.streamer(past)
    x = np.array(past.samples[0], dtype=float)
    path[0] = x
    for k in range(n):
        x = x + st.drift() * dt + dW[k]
        path[k + 1] = x
        if not np.all(np.isfinite(x)):
            return path, k + 1, math.inf
        st.push(x)
        g = st.guard()
        if not g < radius:
            return path, k + 1, g
    return path, -1, 0.0


@dataclass
class PicardChunk:
    """One converged Picard chunk: its path and the sup-norm change per iteration."""

    path: np.ndarray
    residuals: list = field(default_factory=list)


def picard_iterate(a: MemoryDrift, past: HistoryPath, dW: np.ndarray, dt: float, tol: float, max_iter: int) -> PicardChunk:
    """Iterate ``y <- Phi(y)`` on one chunk, starting from ``x(0) + W``.

    ``Phi(y)(t_k) = x(0) + sum_{j<k} dt (a_j + a_{j+1})/2 + W(t_k)`` with
    ``a_j = a(pi_{t_j}(x:y))``.  Stops when the sup-norm change drops below
    ``tol``; raises :class:`ContractionFailure` if the change grows three
    iterations in a row or ``max_iter`` is exhausted.
    """
    dW = np.asarray(dW, dtype=float).reshape(-1, a.dim)
    base = np.cumsum(np.concatenate([past.samples[:1], dW]), axis=0)
    y = base
    residuals = []
    grows = 0
    for _ in range(max_iter):
        drift = a.along(past, y)
        with np.errstate(over="ignore", invalid="ignore"):
            integral = np.zeros_like(y)
            np.cumsum(0.5 * dt * (drift[:-1] + drift[1:]), axis=0, out=integral[1:])
            y_new = base + integral
            change = float(np.max(np.abs(y_new - y)))
        if not math.isfinite(change):
            raise ContractionFailure("Picard iterate became non-finite; use a shorter chunk")
        residuals.append(change)
        y = y_new
        if change < tol:
            return PicardChunk(y, residuals)
        if len(residuals) > 1 and change > residuals[-2]:
            grows += 1
            if grows >= 3:
                raise ContractionFailure(
                    f"Picard change grew for 3 consecutive iterations (last {change:.3g}); use a shorter chunk"
                )
        else:
            grows = 0
    raise ContractionFailure(f"no convergence in {max_iter} iterations (last change {residuals[-1]:.3g})")


def picard_solve(a: MemoryDrift, past: HistoryPath, w: WienerPath, cfg: SolverConfig) -> FuturePath:
    """Chain Picard chunks up to the horizon.

    Chunks start at ``min(cfg.picard_chunk, T)`` and are halved whenever a
    chunk fails to contract, down to ``cfg.picard_min_chunk``.
    """
    n = _check_inputs(a, past, w, cfg)
    dt = cfg.dt
    dW = np.asarray(w.increments[:n], dtype=float)
    keep = a.lookback(dt)
    chrono = past.samples[::-1] if keep is None else past.padded(keep)[::-1]
    out = [past.samples[:1]]
    k = 0
    chunk = max(1, snap_index(min(cfg.picard_chunk, cfg.horizon), dt))
    min_chunk = max(1, snap_index(cfg.picard_min_chunk, dt))
    while k < n:
        m = min(chunk, n - k)
        cur = HistoryPath(chrono[::-1], dt, past.extension, past.origin_time + k * dt)
        try:
            res = picard_iterate(a, cur, dW[k : k + m], dt, cfg.picard_tol, cfg.picard_max_iter)
        except ContractionFailure:
            if m <= min_chunk:
                raise
            chunk = max(min_chunk, m // 2)
            continue
        y = res.path
        g = a.guard_along(cur, y)
        bad = np.flatnonzero(~(g < cfg.blowup_radius))
        if bad.size:
            stop = k + int(bad[0])
            err = BlowupError(stop, past.origin_time + stop * dt, float(g[bad[0]]), cfg.blowup_radius)
            err.partial = np.concatenate(out + [y[1 : bad[0] + 1]])
            raise err
        out.append(y[1:])
        chrono = np.concatenate([chrono, y[1:]])
        if keep is not None and chrono.shape[0] > keep:
            chrono = chrono[-keep:]
        k += m
    return FuturePath(np.concatenate(out), dt, past.origin_time)


def solve_cauchy(
    a: MemoryDrift,
    past: HistoryPath,
    seed: int,
    cfg: SolverConfig,
    stream_id: int = 0,
    method: str = "euler",
) -> FuturePath:
    """Sample the noise for ``(seed, stream_id)`` and solve; bit-identical for equal inputs."""
    w = sample_wiener(seed, stream_id, a.dim, cfg.dt, cfg.n_steps)
    if method == "euler":
        return euler_maruyama(a, past, w, cfg)
    if method == "picard":
        return picard_solve(a, past, w, cfg)
    raise ContractViolation(f"unknown method {method!r}")
