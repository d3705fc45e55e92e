"""Reduction of a forced Galerkin system to a memory SDE on its forced modes.

Models expose a native state plus real coordinates split into L (forced)
and H (unforced).  The high modes obey a deterministic recursion driven by
the low modes, so ``Psi`` (the high modes as a function of the low-mode
past) is recovered by running that recursion from a long way back.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..drift import MemoryDrift
from ..errors import ContractViolation, ReconstructionError
from ..pathspace import HistoryPath
from ..solver import make_rng
from .gl import GLModel, gl_dissipative_constants, gl_low_constants
from .nse import NSEModel

__all__ = [
    "spde_step",
    "simulate",
    "SpdeRun",
    "SyncResult",
    "sync_experiment",
    "PsiResult",
    "reconstruct_psi",
    "FactorResult",
    "factorization_residual",
    "ProbeReport",
    "assumption_probe_dissipative",
    "assumption_probe_lip",
    "lyapunov_U",
    "ReducedDrift",
    "reduced_drift",
]


def spde_step(model, state, dt: float, dB=None):
    """One semi-implicit Galerkin step.

    ``dB`` holds standard Brownian increments per real coordinate; a nonzero
    increment on an unforced coordinate is rejected, since noise may only
    enter through the forced modes.
    """
    noise = None
    if dB is not None:
        dB = np.asarray(dB, dtype=float)
        if dB.shape != (model.size,):
            raise ContractViolation(f"need one increment per coordinate ({model.size})")
        sigma = model.forcing.sigma
        bad = np.flatnonzero((sigma == 0) & (dB != 0))
        if bad.size:
            raise ContractViolation(f"noise on unforced coordinate(s) {bad[:5].tolist()}")
        noise = model.noise(dB[sigma > 0])
    return model.step(state, dt, noise)


class SpdeRun(NamedTuple):
    states: np.ndarray  # stored states (native), chronological
    dt: float
    every: int


def simulate(model, u0, dt: float, n_steps: int, seed: int, stream_id: int = 0, every: int = 1,
             burn_in: int = 0) -> SpdeRun:
    """Integrate from ``u0``; ``burn_in`` steps are discarded, then every ``every``-th state is stored."""
    rng = make_rng(seed, stream_id)
    d = model.forcing.d
    sq = math.sqrt(dt)
    u = np.array(u0)
    for _ in range(burn_in):
        u = model.step(u, dt, model.noise(rng.standard_normal(d) * sq))
    out = [u]
    for k in range(1, n_steps + 1):
        u = model.step(u, dt, model.noise(rng.standard_normal(d) * sq))
        if k % every == 0:
            out.append(u)
    return SpdeRun(np.array(out), dt, every)


def _unorm(model, dh) -> float:
    lam = model.lam_real[model.split.h_idx]
    return float(math.sqrt(np.sum((1.0 + lam) * dh * dh)))


class SyncResult(NamedTuple):
    times: np.ndarray
    gap: np.ndarray
    fitted_rate: float
    diverged: bool
    finding: str


def sync_experiment(model, dt: float, T: float, seed: int, h0_a, h0_b, u0=None, stream_id: int = 0,
                    n_windows: int = 20, floor: float = 1e-13) -> SyncResult:
    """Slave two high-mode copies to one low-mode path and track their distance.

    One trajectory of the full system supplies ``ell``; each copy obeys the
    high-mode part of the same step with the copy's own ``h``.  ``h0_a``,
    ``h0_b`` are native states whose H part seeds the copies.  The rate is a
    least-squares fit of ``log gap`` while ``gap > floor * gap(0)``.  A gap
    whose window maxima grow three windows in a row is reported as a
    threshold violation rather than raised.
    """
    mh = model.mask_h
    u = np.zeros_like(np.asarray(h0_a)) if u0 is None else np.array(u0)
    ha = np.where(mh, h0_a, 0)
    hb = np.where(mh, h0_b, 0)
    n = int(round(T / dt))
    rng = make_rng(seed, stream_id)
    d = model.forcing.d
    sq = math.sqrt(dt)
    gap = np.empty(n + 1)
    gap[0] = model.norm(ha - hb)
    for k in range(1, n + 1):
        ell = np.where(mh, 0, u)
        if gap[k - 1] > 0:
            ha = np.where(mh, model.step(ell + ha, dt), 0)
            hb = np.where(mh, model.step(ell + hb, dt), 0)
        u = model.step(u, dt, model.noise(rng.standard_normal(d) * sq))
        gap[k] = model.norm(ha - hb) if gap[k - 1] > 0 else 0.0
    t = dt * np.arange(n + 1)
    rate = math.nan
    sel = gap > max(floor * gap[0], 1e-300)
    if np.count_nonzero(sel) >= 2:
        rate = float(np.polyfit(t[sel], np.log(gap[sel]), 1)[0])
    w = [c.max() for c in np.array_split(gap, n_windows)]
    grows = 0
    diverged = False
    for a, b in zip(w[:-1], w[1:]):
        grows = grows + 1 if b > a else 0
        if grows >= 3:
            diverged = True
            break
    finding = "gap grew for 3 consecutive windows: threshold condition likely violated" if diverged else "synchronizing"
    return SyncResult(t, gap, rate, diverged, finding)


class PsiResult(NamedTuple):
    h: np.ndarray  # H coordinates at time 0
    lookback: float
    delta: float  # U-norm change at the last doubling (nan for a fixed lookback)
    converged: bool


def _slave(model, ell_chrono: np.ndarray, h0: np.ndarray, dt: float) -> np.ndarray:
    """Run the high-mode recursion along ``ell`` given oldest first; returns ``h`` one step past the last sample."""
    h = h0
    for ell in ell_chrono:
        _, h = model.parts(model.step(model.embed(ell, h), dt))
    return h


def reconstruct_psi(model, ell_history: HistoryPath, h0=None, lookback: float | None = None,
                    psi_tol: float = 1e-8, max_steps: int = 2**14, start_steps: int = 8) -> PsiResult:
    """High modes at time 0 recovered from the low-mode past.

    With ``lookback`` the recursion starts ``lookback`` before 0 from ``h0``
    (default 0).  Without it the lookback doubles from ``start_steps`` until
    the change in ``h(0)`` is below ``psi_tol`` in the U-norm, or until
    ``max_steps`` / the stored window is exhausted (``converged`` False).
    """
    dt = ell_history.dt
    d = model.split.d
    if ell_history.dim != d:
        raise ContractViolation(f"history dimension {ell_history.dim} != dim L = {d}")
    nh = model.split.h_idx.shape[0]
    h0 = np.zeros(nh) if h0 is None else np.asarray(h0, dtype=float)
    ell = ell_history.samples  # newest first

    def run(n):
        return _slave(model, ell[n:0:-1], h0, dt)

    if lookback is not None:
        n = int(round(lookback / dt))
        if n > ell_history.n - 1:
            raise ContractViolation(f"lookback {lookback} exceeds the stored window {ell_history.window}")
        return PsiResult(run(n), n * dt, math.nan, False)
    limit = min(max_steps, ell_history.n - 1)
    n = min(start_steps, limit)
    h = run(n)
    delta = math.inf
    while 2 * n <= limit:
        h2 = run(2 * n)
        delta = _unorm(model, h2 - h)
        n, h = 2 * n, h2
        if delta < psi_tol:
            return PsiResult(h, n * dt, delta, True)
    return PsiResult(h, n * dt, delta, False)


class FactorResult(NamedTuple):
    indices: np.ndarray
    residual: np.ndarray
    lookbacks: np.ndarray


def factorization_residual(model, states, dt: float, lookback: float | None = None, indices=None,
                           h0=None, psi_tol: float = 1e-8) -> FactorResult:
    """``||P_h u(t) - Psi(pi_t P_l u)||`` at the chosen step indices of a stored run.

    ``states`` are consecutive native states, oldest first.  With
    ``lookback=None`` each reconstruction uses lookback doubling.
    """
    coords = np.array([model.coords(s) for s in states])
    ell, h = coords[:, model.split.l_idx], coords[:, model.split.h_idx]
    if indices is None:
        indices = np.arange(ell.shape[0])
    res, lbs = [], []
    for i in indices:
        hist = HistoryPath(ell[i::-1], dt)
        r = reconstruct_psi(model, hist, h0, lookback, psi_tol)
        res.append(float(np.linalg.norm(h[i] - r.h)))
        lbs.append(r.lookback)
    return FactorResult(np.asarray(indices), np.array(res), np.array(lbs))


class ProbeReport(NamedTuple):
    lhs: float
    rhs: float
    ok: bool


def _default_dissipative(model):
    if isinstance(model, GLModel):
        return gl_dissipative_constants(model.nu, model.forcing.n0)
    raise ContractViolation("no default constants for this model; pass them explicitly")


def assumption_probe_dissipative(model, u, u_tilde, constants: dict | None = None, tol: float = 1e-9) -> ProbeReport:
    """Both sides of the high-mode dissipativity inequality for one pair of states."""
    k = constants or _default_dissipative(model)
    c = model.coords(u)
    ct = model.coords(u_tilde)
    rho_l, rho_h = model.parts(c - ct)
    dF = model.coords(model.F(u)) - model.coords(model.F(u_tilde))
    lhs = float(np.dot(dF[model.split.h_idx], rho_h))
    Uu, Ut = float(model.U(u)), float(model.U(u_tilde))
    rhs = float(
        np.dot(rho_h, rho_h) * (-k["c1"] + k["c2"] * Uu ** k.get("gamma", 1.0))
        + k["c3"] * np.linalg.norm(rho_l) ** k["p1"] * (1 + Uu ** k["p2"] + Ut ** k["p2"])
    )
    return ProbeReport(lhs, rhs, bool(lhs <= rhs + tol * (1 + abs(rhs))))


def assumption_probe_lip(model, ell, h, h_tilde, constants: dict | None = None, tol: float = 1e-9) -> ProbeReport:
    """Both sides of the low-mode Lipschitz estimate; ``ell``, ``h`` in L and H coordinates."""
    if constants is None:
        if not isinstance(model, GLModel):
            raise ContractViolation("no default constants for this model; pass them explicitly")
        constants = gl_low_constants()
    k = constants
    u = model.embed(ell, h)
    ut = model.embed(ell, h_tilde)
    fl, _ = model.parts(model.F(u))
    ftl, _ = model.parts(model.F(ut))
    lhs = float(np.sum((fl - ftl) ** 2))
    Uu, Ut = float(model.U(u)), float(model.U(ut))
    dh = np.asarray(h, dtype=float) - np.asarray(h_tilde, dtype=float)
    rhs = float(k["c4"] * (1 + Uu ** k["p3"] + Ut ** k["p3"]) * np.linalg.norm(dh) ** k["p4"])
    return ProbeReport(lhs, rhs, bool(lhs <= rhs + tol * (1 + abs(rhs))))


def lyapunov_U(which: str, state, model=None) -> float:
    """``||u||^2 + ||u_x||^2`` (gl) or ``||grad u||^2 = ||omega||^2`` (nse), by Parseval."""
    if which == "gl":
        c = np.asarray(state, dtype=float)
        m = model or GLModel(1.0, (c.shape[-1] - 1) // 2)
        return float(m.U(c))
    if which == "nse":
        w = np.asarray(state)
        m = model or NSEModel(1.0, w.shape[0])
        return m.U(w)
    raise ContractViolation(f"unknown equation {which!r}")


# ---------------------------------------------------------------------------
# the reduced memory drift


class ReducedDrift(MemoryDrift):
    """``a(X) = P_l F(l(0) + Psi(l)) / sigma`` in coordinates ``X = l / sigma``.

    Scaling by the forcing amplitudes makes the reduced noise the identity,
    as the solvers assume.  Direct evaluation reconstructs ``Psi`` from the
    stored past; the streamer instead carries ``h`` forward one recursion
    step per new sample, which is the same map without repeated lookbacks.
    """

    kind = "reduced_pde"

    def __init__(self, model, psi_tol: float = 1e-8, max_steps: int = 2**14):
        split = model.split
        split.check_full_rank(model.forcing)
        super().__init__(split.d)
        self.model = model
        self.scale = model.forcing.sigma[split.l_idx]
        self.psi_tol = psi_tol
        self.max_steps = max_steps

    def lookback(self, dt):
        return None

    def psi(self, x: HistoryPath) -> np.ndarray:
        hist = x.with_samples(x.samples * self.scale)
        r = reconstruct_psi(self.model, hist, psi_tol=self.psi_tol, max_steps=self.max_steps)
        if not r.converged:
            raise ReconstructionError(
                f"high modes not converged (last change {r.delta:.3g} at lookback {r.lookback:.4g})",
                r.delta, r.lookback,
            )
        return r.h

    def _drift(self, ell0, h) -> np.ndarray:
        fl, _ = self.model.parts(self.model.F(self.model.embed(ell0, h)))
        return fl / self.scale

    def evaluate_samples(self, samples, dt, extension):
        x = HistoryPath(samples, dt, extension)
        return self._drift(samples[0] * self.scale, self.psi(x))

    def guard_samples(self, samples, dt, extension):
        x = HistoryPath(samples, dt, extension)
        return float(self.model.U(self.model.embed(samples[0] * self.scale, self.psi(x))))

    def streamer(self, past):
        return _ReducedStreamer(self, past)


class _ReducedStreamer:
    def __init__(self, drift: ReducedDrift, past: HistoryPath):
        self.d = drift
        self.dt = past.dt
        self.ell = past.samples[0] * drift.scale
        self.h = drift.psi(past)

    def push(self, value) -> None:
        m = self.d.model
        _, self.h = m.parts(m.step(m.embed(self.ell, self.h), self.dt))
        self.ell = np.asarray(value, dtype=float) * self.d.scale

    def drift(self) -> np.ndarray:
        return self.d._drift(self.ell, self.h)

    def guard(self) -> float:
        m = self.d.model
        return float(m.U(m.embed(self.ell, self.h)))


def reduced_drift(ell_history: HistoryPath, model, psi_tol: float = 1e-8) -> np.ndarray:
    """``P_l F(l(0) + Psi(l))`` for a low-mode past in physical (unscaled) coordinates."""
    r = reconstruct_psi(model, ell_history, psi_tol=psi_tol)
    if not r.converged:
        raise ReconstructionError(f"high modes not converged (last change {r.delta:.3g})", r.delta, r.lookback)
    fl, _ = model.parts(model.F(model.embed(ell_history.samples[0], r.h)))
    return fl
