"""Stationary measures and uniqueness probes.

Krylov-Bogoliubov averages are approximated by time averages along long
trajectories pooled over independent seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .drift import MemoryDrift
from .errors import BlowupError, ContractViolation, PartialResultError
from .pathspace import FullPath, HistoryPath, snap_index
from .solver import SolverConfig, WienerPath, solve_cauchy

__all__ = [
    "OccupationMeasure",
    "krylov_bogoliubov",
    "gelman_rubin",
    "marginal_distance",
    "TailRow",
    "TailTable",
    "increment_tail_check",
    "GirsanovReport",
    "girsanov_logdensity",
    "CouplingResult",
    "coupling_experiment",
    "Regularity",
    "marginal_regularity",
]


@dataclass(frozen=True, eq=False)
class OccupationMeasure:
    """Weighted marginal samples standing in for ``Q_T``."""

    samples: np.ndarray  # (n, dim)
    weights: np.ndarray  # (n,), sum 1
    T_window: float
    n_chains: int = 1
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        w = np.asarray(self.weights, dtype=float)
        if s.shape[0] != w.shape[0]:
            raise ContractViolation("one weight per sample required")
        if s.shape[0] and not np.all(w > 0):
            raise ContractViolation("weights must be positive")
        if s.shape[0] and abs(w.sum() - 1.0) > 1e-12:
            raise ContractViolation(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, samples, T_window: float, n_chains: int = 1, **diag):
        s = np.asarray(samples, dtype=float)
        n = s.shape[0]
        return cls(s, np.full(n, 1.0 / n) if n else np.empty(0), T_window, n_chains, dict(diag))

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.samples

    def variance(self) -> np.ndarray:
        d = self.samples - self.mean()
        return self.weights @ (d * d)

    def merge(self, other: "OccupationMeasure") -> "OccupationMeasure":
        """Pool two measures, weighting each by its averaging time."""
        if self.size and other.size and self.dim != other.dim:
            raise ContractViolation("dimension mismatch")
        T = self.T_window + other.T_window
        w = np.concatenate([self.weights * (self.T_window / T), other.weights * (other.T_window / T)])
        w = w / w.sum()
        return OccupationMeasure(
            np.concatenate([self.samples, other.samples]), w, T, self.n_chains + other.n_chains
        )


def gelman_rubin(chains: Sequence[np.ndarray]) -> float:
    """Potential scale reduction factor across chains (1D samples)."""
    chains = [np.asarray(c, dtype=float).ravel() for c in chains]
    n = min(c.size for c in chains)
    if len(chains) < 2 or n < 2:
        return math.nan
    x = np.stack([c[:n] for c in chains])
    W = x.var(axis=1, ddof=1).mean()
    B = n * x.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * W + B / n
    return float(math.sqrt(var_plus / W)) if W > 0 else math.inf


def krylov_bogoliubov(
    a: MemoryDrift,
    past: HistoryPath,
    T: float,
    burn_in: float,
    dt: float,
    seeds: Sequence[int],
    thin: int = 10,
    blowup_radius: float = 1e12,
    rhat_threshold: float = 1.1,
) -> OccupationMeasure:
    """Pool post-burn-in samples (every ``thin``-th step) of one trajectory per seed.

    ``diagnostics`` carries the Gelman-Rubin statistic of each coordinate
    and a ``converged`` flag; a drift without a stationary law still returns
    a measure, flagged as not converged.
    """
    if not T > burn_in > 0:
        raise ContractViolation("need T > burn_in > 0")
    if len(seeds) == 0:
        raise ContractViolation("need at least one seed")
    if past.dt != dt:
        raise ContractViolation("past grid step must equal dt")
    cfg = SolverConfig(dt=dt, horizon=T, blowup_radius=blowup_radius)
    k0 = snap_index(burn_in, dt)
    chains, failed = [], []
    for s in seeds:
        try:
            y = solve_cauchy(a, past, s, cfg).samples
        except BlowupError:
            failed.append(s)
            continue
        chains.append(y[k0 + 1 :: thin])
    rhat = [gelman_rubin([c[:, j] for c in chains]) for j in range(a.dim)] if chains else []
    m = OccupationMeasure.uniform(
        np.concatenate(chains) if chains else np.empty((0, a.dim)),
        T_window=(T - burn_in) * len(chains),
        n_chains=len(chains),
        rhat=rhat,
        converged=bool(len(chains) > 1 and all(r < rhat_threshold for r in rhat)),
        seeds=[s for s in seeds if s not in failed],
    )
    if failed:
        raise PartialResultError(f"chains blew up for seeds {failed}", failed, m)
    return m


class Regularity(NamedTuple):
    atom_mass: float  # largest total weight carried by a single sample value
    empty_bin_fraction: float  # share of empty histogram bins over the central bulk


def marginal_regularity(m: OccupationMeasure, bins: int = 50, bulk: float = 0.98) -> Regularity:
    """Sample-level signs of a density: no atoms and no gaps inside the bulk.

    The bulk is the central ``bulk`` weighted quantile range of each
    coordinate; both numbers are maxima over coordinates.  This is only a
    proxy: absolute continuity cannot be certified from finitely many samples.
    """
    if m.size == 0:
        raise ContractViolation("empty occupation measure")
    if not 0 < bulk < 1 or bins < 2:
        raise ContractViolation("need 0 < bulk < 1 and at least 2 bins")
    atom, empty = 0.0, 0.0
    for j in range(m.dim):
        x = m.samples[:, j]
        _, inv = np.unique(x, return_inverse=True)
        atom = max(atom, float(np.bincount(inv.ravel(), weights=m.weights).max()))
        order = np.argsort(x, kind="stable")
        cw = np.cumsum(m.weights[order])
        lo = x[order][np.searchsorted(cw, (1 - bulk) / 2)]
        hi = x[order][min(np.searchsorted(cw, (1 + bulk) / 2), x.size - 1)]
        if hi <= lo:
            empty = 1.0
            continue
        hist, _ = np.histogram(x, bins=bins, range=(lo, hi), weights=m.weights)
        empty = max(empty, float(np.mean(hist == 0)))
    return Regularity(atom, empty)


def _weighted_cdf_at(x_sorted, cw, points):
    idx = np.searchsorted(x_sorted, points, side="right")
    return np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)


def marginal_distance(m1: OccupationMeasure, m2: OccupationMeasure) -> float:
    """Weighted two-sample Kolmogorov-Smirnov statistic, max over coordinates."""
    if m1.size == 0 or m2.size == 0:
        raise ContractViolation("empty occupation measure")
    if m1.dim != m2.dim:
        raise ContractViolation("dimension mismatch")
    best = 0.0
    for j in range(m1.dim):
        cdfs = []
        pts = np.union1d(m1.samples[:, j], m2.samples[:, j])
        for m in (m1, m2):
            order = np.argsort(m.samples[:, j], kind="stable")
            cw = np.cumsum(m.weights[order])
            cw /= cw[-1]
            cdfs.append(_weighted_cdf_at(m.samples[order, j], cw, pts))
        best = max(best, float(np.max(np.abs(cdfs[0] - cdfs[1]))))
    return min(best, 1.0)


class TailRow(NamedTuple):
    lag: float
    z: float
    empirical_prob: float
    unit_bound: float  # (z^-4 + z^-2) lag^2


class TailTable(NamedTuple):
    rows: list
    C_fit: float
    C_theory: float
    ok: bool

    def bound(self, row: TailRow, C: float | None = None) -> float:
        return (self.C_fit if C is None else C) * row.unit_bound


def increment_tail_check(traj, lags, z_grid, dt: float | None = None, drift_values=None) -> TailTable:
    """Exceedance frequencies ``P{|X(t+lag) - X(t)| > z}`` against ``C (z^-4 + z^-2) lag^2``.

    ``C_fit`` is the smallest constant dominating every row.  ``C_theory``
    is the Chebyshev constant ``8 (3 + lag_max^2 E|a|^4)`` implied by
    ``E|X(t+s)-X(t)|^4 <= 8 (3 s^2 + s^4 E|a|^4)`` for unit additive noise
    (``drift_values`` along the trajectory supply ``E|a|^4``; omitted means
    drift-free).  ``ok`` says the fitted constant stays below it.
    """
    if isinstance(traj, FullPath):
        x = traj.future.samples
        dt = traj.dt
    else:
        x = np.asarray(traj, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if dt is None:
            raise ContractViolation("dt required for a raw sample array")
    rows = []
    c_fit = 0.0
    for lag in lags:
        k = snap_index(lag, dt)
        if k < 1 or k >= x.shape[0]:
            raise ContractViolation(f"lag {lag} outside the trajectory")
        inc = np.linalg.norm(x[k:] - x[:-k], axis=1)
        for z in z_grid:
            emp = float(np.mean(inc > z))
            ub = (z**-4 + z**-2) * (k * dt) ** 2
            rows.append(TailRow(k * dt, float(z), emp, ub))
            c_fit = max(c_fit, emp / ub)
    a4 = 0.0
    if drift_values is not None:
        av = np.asarray(drift_values, dtype=float).reshape(len(drift_values), -1)
        a4 = float(np.mean(np.sum(av * av, axis=1) ** 2))
    lag_max = max(r.lag for r in rows)
    c_theory = 8.0 * (3.0 + lag_max**2 * a4)
    return TailTable(rows, c_fit, c_theory, bool(c_fit <= c_theory))


@dataclass(frozen=True)
class GirsanovReport:
    log_density: float
    novikov_stat: float
    truncated: bool = False
    crossing_step: int | None = None


def girsanov_logdensity(
    a1: MemoryDrift, a2: MemoryDrift, traj: FullPath, w: WienerPath, novikov_cap: float = 50.0
) -> GirsanovReport:
    """``sum <D, dW> - 1/2 sum |D|^2 dt`` with ``D = a1 - a2`` at left grid points.

    Accumulation stops before the first step at which the running Novikov
    statistic would exceed ``novikov_cap``; that step is reported.
    """
    if traj.dt != w.dt:
        raise ContractViolation("trajectory and noise grids differ")
    n = traj.future.n - 1
    if w.n_steps < n:
        raise ContractViolation("noise shorter than the trajectory")
    y = traj.future.samples
    D = a1.along(traj.past, y)[:n] - a2.along(traj.past, y)[:n]
    dW = np.asarray(w.increments[:n], dtype=float)
    quad = 0.5 * w.dt * np.einsum("ij,ij->i", D, D)
    cum = np.cumsum(quad)
    over = np.flatnonzero(cum > novikov_cap)
    stop = int(over[0]) if over.size else n
    mart = float(np.einsum("ij,ij->", D[:stop], dW[:stop]))
    nov = float(cum[stop - 1]) if stop > 0 else 0.0
    return GirsanovReport(mart - nov, nov, bool(over.size), stop if over.size else None)


class CouplingResult(NamedTuple):
    times: np.ndarray
    gap: np.ndarray
    fitted_rate: float  # nan when skipped
    C: float  # fitted on the prefactor window
    dominated: bool  # gap <= C e^{-t} on the whole grid
    integrated_gap_sq: np.ndarray  # int_0^t gap^2


def coupling_experiment(
    a: MemoryDrift,
    x1: HistoryPath,
    x2: HistoryPath,
    seed: int,
    T: float,
    stream_id: int = 0,
    floor: float = 1e-14,
    prefactor_window: float = 2.0,
    blowup_radius: float = 1e12,
) -> CouplingResult:
    """Drift gap between two pasts glued to one common future.

    The future is simulated once from ``x1``.  ``C`` is the smallest
    constant with ``gap <= C e^{-t}`` on ``[0, prefactor_window]``; the
    dominance check then extends that bound to the whole horizon.  The
    decay rate is the least-squares slope of ``log gap`` where it exceeds
    ``floor``.
    """
    if x1.dt != x2.dt:
        raise ContractViolation("pasts on different grids")
    if not np.array_equal(x1.samples[0], x2.samples[0]):
        raise ContractViolation("pasts must share the present value x1(0) = x2(0)")
    cfg = SolverConfig(dt=x1.dt, horizon=T, blowup_radius=blowup_radius)
    y = solve_cauchy(a, x1, seed, cfg, stream_id).samples
    t = x1.dt * np.arange(y.shape[0])
    gap = np.linalg.norm(a.along(x1, y) - a.along(x2, y), axis=1)
    integ = np.zeros_like(gap)
    np.cumsum(0.5 * x1.dt * (gap[:-1] ** 2 + gap[1:] ** 2), out=integ[1:])
    win = t <= prefactor_window
    C = float(np.max(gap[win] * np.exp(t[win])))
    with np.errstate(over="ignore"):
        dominated = bool(np.all(gap <= C * np.exp(-t) * (1 + 1e-12) + 1e-300))
    sel = gap > floor
    rate = math.nan
    if np.count_nonzero(sel) >= 2:
        rate = float(np.polyfit(t[sel], np.log(gap[sel]), 1)[0])
    return CouplingResult(t, gap, rate, C, dominated, integ)
