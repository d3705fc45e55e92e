"""Lyapunov functionals on pasts and empirical checks of the drift inequality.

``V = +inf`` is a legal value (the functional may diverge on some pasts).
It is kept as ``math.inf`` and every aggregate refuses it with
:class:`InfiniteLyapunovError` instead of letting it turn into NaN.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .drift import GaussianKernelDrift, MemoryDrift, PathDependentKernelDrift
from .errors import BlowupError, ContractViolation, InfiniteLyapunovError, UnreliableEstimate
from .pathspace import FullPath, HistoryPath, fluctuation_series, shift_view
from .solver import make_rng

__all__ = [
    "LyapunovSpec",
    "gaussian_kernel_spec",
    "pathdep_kernel_spec",
    "quadratic_spec",
    "eval_V_example",
    "GeneratorEstimate",
    "generator_drift_estimate",
    "AuditRow",
    "audit_generator",
    "random_histories",
    "RunningAverage",
    "v_series",
    "time_average_V",
    "MomentSeries",
    "moment_series",
    "GrowthFit",
    "growth_exponent",
    "max_envelope",
    "fluctuation_envelope_ratios",
]

V_INF = math.inf


def _finite_or_raise(v: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.any(np.isinf(v)):
        k = int(np.flatnonzero(np.isinf(v))[0])
        raise InfiniteLyapunovError(f"{what}: V is +inf at index {k}")
    if np.any(np.isnan(v)):
        raise InfiniteLyapunovError(f"{what}: V contains NaN")
    return v


@dataclass(frozen=True)
class LyapunovSpec:
    """``V`` with the constants of ``h < C1 - C2 V^gamma``, ``|f| <= C3 V^delta``, ``V >= C0 |x(0)|^l``.

    ``along(past, future)`` optionally evaluates ``V`` at every future grid
    point in one pass; otherwise :func:`v_series` falls back to ``eval_V``
    on each shifted view.
    """

    eval_V: Callable[[HistoryPath], float]
    C0: float
    l: float
    C1: float
    C2: float
    gamma: float
    delta: float
    C3: float
    along: Callable | None = None
    name: str = "custom"

    def __post_init__(self):
        for k in ("C0", "l", "C1", "C2", "gamma", "C3"):
            if not getattr(self, k) > 0:
                raise ContractViolation(f"{k} must be positive")
        if not 0 <= self.delta < (1 + self.gamma) / 2:
            raise ContractViolation("need 0 <= delta < (1 + gamma)/2")

    @property
    def ratio(self) -> float:
        return self.C1 / self.C2

    def __call__(self, x: HistoryPath) -> float:
        v = float(self.eval_V(x))
        lower = self.C0 * float(np.linalg.norm(x.samples[0])) ** self.l
        # V may legitimately be +inf; only a finite violation is an error
        if not v >= lower * (1 - 1e-12):
            raise ContractViolation(f"V = {v} below C0|x(0)|^l = {lower}")
        return v


_GAUSS = GaussianKernelDrift()
_PATHDEP = PathDependentKernelDrift()


def _v_gaussian(x: HistoryPath) -> float:
    return _GAUSS.guard(x)


def _v_pathdep(x: HistoryPath) -> float:
    ph = _PATHDEP.psi_hat(x)
    return math.inf if math.isinf(ph) else float(x.samples[0, 0] ** 2 + ph * ph)


def gaussian_kernel_spec(drift: GaussianKernelDrift | None = None) -> LyapunovSpec:
    """``V = x(0)^2 + Psi^2`` for the Gaussian-kernel drift."""
    d = drift or _GAUSS
    return LyapunovSpec(
        d.guard, C0=1.0, l=2.0, C1=1.0, C2=1.0, gamma=1.0, delta=0.5, C3=2.0, along=d.guard_along, name="gaussian_kernel"
    )


def pathdep_kernel_spec(drift: PathDependentKernelDrift | None = None) -> LyapunovSpec:
    """``V = x(0)^2 + Psi_hat^2`` for the path-dependent kernel drift."""
    d = drift or _PATHDEP

    def v(x):
        ph = d.psi_hat(x)
        return math.inf if math.isinf(ph) else float(x.samples[0, 0] ** 2 + ph * ph)

    return LyapunovSpec(v, C0=1.0, l=2.0, C1=1.0, C2=2.0, gamma=1.0, delta=0.5, C3=2.0, along=d.guard_along, name="pathdep_kernel")


def quadratic_spec(dim: int = 1, C1: float | None = None, C2: float = 2.0) -> LyapunovSpec:
    """``V = |x(0)|^2``; for ``a = -x(0)`` Ito gives ``h = -2|x|^2 + dim``."""

    def along(past, future):
        f = np.asarray(future, dtype=float).reshape(-1, dim)
        return np.einsum("ij,ij->i", f, f)

    return LyapunovSpec(
        lambda x: float(x.samples[0] @ x.samples[0]),
        C0=1.0, l=2.0, C1=float(dim) if C1 is None else C1, C2=C2, gamma=1.0, delta=0.5, C3=2.0,
        along=along, name="quadratic",
    )


def eval_V_example(which: str, x: HistoryPath) -> float:
    if x.dim != 1:
        raise ContractViolation("the worked examples are one-dimensional")
    if which == "gaussian_kernel":
        return _v_gaussian(x)
    if which == "pathdep_kernel":
        return _v_pathdep(x)
    raise ContractViolation(f"unknown example {which!r}")


# ---------------------------------------------------------------------------
# generator estimate


class GeneratorEstimate(NamedTuple):
    estimate: float
    stderr: float
    n_used: int
    n_excluded: int


def generator_drift_estimate(
    a: MemoryDrift,
    spec: LyapunovSpec,
    x: HistoryPath,
    m: int = 1000,
    dt_probe: float | None = None,
    seed: int = 0,
    antithetic: bool = True,
    max_excluded: float = 0.1,
) -> GeneratorEstimate:
    """Monte Carlo estimate of ``h(x) = lim E[V(pi_dt X) - V(x)]/dt``.

    Replica ``i`` draws its increment from stream ``i``.  With
    ``antithetic`` each draw is paired with its negation and the pair mean
    counts as one observation, which removes the leading martingale term.
    ``dt_probe`` must be a multiple of the past's grid step.
    """
    if m < 100:
        raise ContractViolation("need m >= 100 replicas")
    dt = x.dt
    dt_probe = dt if dt_probe is None else float(dt_probe)
    k = int(round(dt_probe / dt))
    if k < 1 or abs(k * dt - dt_probe) > 1e-9 * dt_probe:
        raise ContractViolation("dt_probe must be a positive multiple of the grid step")
    v0 = spec(x)
    _finite_or_raise(np.array([v0]), "generator estimate")
    n_draw = (m + 1) // 2 if antithetic else m
    obs = []
    excluded = 0
    for i in range(n_draw):
        dW = make_rng(seed, i).standard_normal((k, a.dim)) * math.sqrt(dt)
        signs = (1.0, -1.0) if antithetic else (1.0,)
        vals = []
        for s in signs:
            try:
                v1 = spec(_continue(a, x, s * dW))
            except BlowupError:
                v1 = math.inf
            vals.append((v1 - v0) / dt_probe)
        if all(math.isfinite(v) for v in vals):
            obs.append(sum(vals) / len(vals))
        else:
            excluded += len(signs)
    total = n_draw * (2 if antithetic else 1)
    if excluded > max_excluded * total:
        raise UnreliableEstimate(f"{excluded} of {total} continuations blew up")
    obs = np.asarray(obs)
    se = float(obs.std(ddof=1) / math.sqrt(obs.size))
    return GeneratorEstimate(float(obs.mean()), se, obs.size * (2 if antithetic else 1), excluded)


def _continue(a: MemoryDrift, x: HistoryPath, dW: np.ndarray, radius: float = 1e12) -> HistoryPath:
    """``k = len(dW)`` Euler steps from ``x``; returns the past seen at the end."""
    st = a.streamer(x)
    new = []
    cur = np.array(x.samples[0], dtype=float)
    for inc in dW:
        cur = cur + st.drift() * x.dt + inc
        if not np.all(np.isfinite(cur)) or float(cur @ cur) >= radius:
            raise BlowupError(len(new) + 1, (len(new) + 1) * x.dt, float(cur @ cur), radius)
        st.push(cur)
        new.append(cur)
    samples = np.concatenate([np.array(new[::-1]), x.samples])
    return HistoryPath(samples, x.dt, x.extension, x.origin_time + len(new) * x.dt)


def random_histories(n: int, dt: float, window: float, seed: int = 0, scale: float = 1.0) -> list:
    """Stationary OU pasts with random amplitude: a corpus of nice test paths."""
    rng = make_rng(seed, 0)
    m = int(round(window / dt)) + 1
    out = []
    decay = math.exp(-dt)
    noise = math.sqrt((1 - decay**2) / 2)
    for _ in range(n):
        amp = scale * rng.uniform(0.1, 2.0)
        z = rng.standard_normal(m)
        x = np.empty(m)
        x[0] = z[0] / math.sqrt(2)
        for j in range(1, m):
            x[j] = decay * x[j - 1] + noise * z[j]
        out.append(HistoryPath(amp * x, dt))
    return out


class AuditRow(NamedTuple):
    V: float
    estimate: float
    stderr: float
    bound: float
    ok: bool


def audit_generator(a, spec: LyapunovSpec, corpus: Sequence[HistoryPath], m=400, dt_probe=None, seed=0, n_se=3.0):
    """Check ``h(x) <= C1 - C2 V(x)^gamma + n_se SE`` on each path of the corpus."""
    rows = []
    for i, x in enumerate(corpus):
        est = generator_drift_estimate(a, spec, x, m, dt_probe, seed=seed + 7919 * i)
        v = spec(x)
        bound = spec.C1 - spec.C2 * v**spec.gamma
        rows.append(AuditRow(v, est.estimate, est.stderr, bound, est.estimate <= bound + n_se * est.stderr))
    return rows


# ---------------------------------------------------------------------------
# trajectory diagnostics


def v_series(traj: FullPath, spec: LyapunovSpec) -> np.ndarray:
    """``V(pi_t X)`` at every future grid point ``t = 0, dt, ...`` (oldest first)."""
    if spec.along is not None:
        return np.asarray(spec.along(traj.past, traj.future.samples), dtype=float)
    return np.array([spec.eval_V(shift_view(traj, k * traj.dt)) for k in range(traj.future.n)])


class RunningAverage(NamedTuple):
    lags: np.ndarray  # T = 0, dt, 2dt, ...
    values: np.ndarray  # (1/T) int_{-T}^0 V^gamma, looking back from the end
    v_recent_first: np.ndarray


def time_average_V(traj, spec: LyapunovSpec, gamma: float | None = None, dt: float | None = None) -> RunningAverage:
    """Running averages of ``V^gamma`` over windows ``[-T, 0]`` ending at the trajectory's last point.

    ``traj`` is a :class:`FullPath` or an array of V-values (oldest first,
    then ``dt`` is required).  The integral is the same cumulative
    trapezoid used by :func:`fluctuation_series`, so
    ``T*avg(T) - (C1/C2)*T == FV(-T)``.
    """
    if isinstance(traj, FullPath):
        v = v_series(traj, spec)
        dt = traj.dt
    else:
        v = np.asarray(traj, dtype=float)
        if dt is None:
            raise ContractViolation("dt required with a raw V series")
    gamma = spec.gamma if gamma is None else gamma
    v = _finite_or_raise(v, "time average")[::-1]
    fs = fluctuation_series(v, dt, spec.C1, spec.C2, gamma)
    lags = -fs.times
    integral = fs.values + spec.ratio * lags
    avg = np.empty_like(integral)
    avg[0] = v[0] ** gamma
    avg[1:] = integral[1:] / lags[1:]
    return RunningAverage(lags, avg, v)


class MomentSeries(NamedTuple):
    window_means: np.ndarray
    window_centers: np.ndarray
    slope: float
    ci: tuple


def moment_series(traj, spec: LyapunovSpec | None, kappa: float, n_windows: int = 20, dt: float = 1.0,
                  n_boot: int = 2000, seed: int = 0) -> MomentSeries:
    """Window means of ``V^kappa``, their least-squares trend and a window-bootstrap 95% CI for it."""
    if not kappa > 0:
        raise ContractViolation("kappa must be positive")
    if isinstance(traj, FullPath):
        v = v_series(traj, spec)
        dt = traj.dt
    else:
        v = np.asarray(traj, dtype=float)
    v = _finite_or_raise(v, "moment series")
    if n_windows < 3 or v.size < n_windows:
        raise ContractViolation("need at least 3 windows with one sample each")
    chunks = np.array_split(v**kappa, n_windows)
    means = np.array([c.mean() for c in chunks])
    edges = np.cumsum([0] + [c.size for c in chunks])
    centers = dt * 0.5 * (edges[:-1] + edges[1:] - 1)
    slope = float(np.polyfit(centers, means, 1)[0])
    rng = make_rng(seed, 0)
    idx = rng.integers(0, n_windows, size=(n_boot, n_windows))
    tc = centers[idx]
    mc = means[idx]
    tm = tc.mean(axis=1, keepdims=True)
    mm = mc.mean(axis=1, keepdims=True)
    var = ((tc - tm) ** 2).sum(axis=1)
    ok = var > 0
    boot = ((tc - tm) * (mc - mm)).sum(axis=1)[ok] / var[ok]
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return MomentSeries(means, centers, slope, (float(lo), float(hi)))


class GrowthFit(NamedTuple):
    exponent: float
    envelope_ratio: float


def max_envelope(series) -> np.ndarray:
    return np.maximum.accumulate(np.abs(np.asarray(series, dtype=float)))


def growth_exponent(times, series, form: str = "poly_rho", power: float = 0.75, t_min: float = 1.0,
                    n_points: int = 200) -> GrowthFit:
    """Log-log slope of the max-so-far envelope of ``|series|`` against ``1 + |t|``.

    ``times`` must be ordered by increasing ``|t|``.  The fit uses
    ``n_points`` log-spaced times beyond ``t_min`` so that each decade
    weighs the same.  ``envelope_ratio`` is ``sup env/(1+|t|^power)``;
    ``form`` names which exponent ``power`` is (rho for V, kappa for FV).
    """
    if form not in ("poly_rho", "fluc_kappa"):
        raise ContractViolation(f"unknown form {form!r}")
    t = np.abs(np.asarray(times, dtype=float))
    s = np.asarray(series, dtype=float)
    if t.size < 100:
        raise ContractViolation("need at least 100 points")
    env = max_envelope(s)
    ratio = float(np.max(env / (1 + t**power)))
    sel = np.flatnonzero((t >= t_min) & (env > 0))
    if sel.size < 2:
        return GrowthFit(0.0, ratio)
    grid = np.geomspace(t[sel[0]], t[sel[-1]], n_points)
    pick = np.unique(np.clip(np.searchsorted(t, grid), sel[0], sel[-1]))
    pick = pick[env[pick] > 0]
    if pick.size < 2:
        return GrowthFit(0.0, ratio)
    slope = float(np.polyfit(np.log1p(t[pick]), np.log(env[pick]), 1)[0])
    return GrowthFit(slope, ratio)


def fluctuation_envelope_ratios(v_recent_first, dt: float, spec: LyapunovSpec, kappa: float, horizons,
                                part: str = "abs") -> np.ndarray:
    """``sup_{|t|<=T} |FV(t)|/(1+|t|^kappa)`` for each horizon ``T``.

    ``part="positive"`` uses ``max(FV, 0)`` instead of ``|FV|``: the side of
    the fluctuation that the drift inequality controls directly.
    """
    v = _finite_or_raise(v_recent_first, "fluctuation envelope")
    fs = fluctuation_series(v, dt, spec.C1, spec.C2, spec.gamma)
    lags = -fs.times
    if part == "abs":
        f = np.abs(fs.values)
    elif part == "positive":
        f = np.maximum(fs.values, 0.0)
    else:
        raise ContractViolation(f"unknown part {part!r}")
    r = np.maximum.accumulate(f / (1 + lags**kappa))
    out = []
    for T in horizons:
        k = int(round(T / dt))
        if k >= r.size:
            raise ContractViolation(f"horizon {T} exceeds the series length {lags[-1]}")
        out.append(r[k])
    return np.array(out)
