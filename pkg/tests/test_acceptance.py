"""End-to-end acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from memsde import (
    GaussianKernelDrift,
    HistoryPath,
    MarkovLinearDrift,
    PathDependentKernelDrift,
    SolverConfig,
    concat,
    euler_maruyama,
    picard_solve,
    sample_wiener,
    solve_cauchy,
)
from memsde.ergodics import (
    coupling_experiment,
    girsanov_logdensity,
    increment_tail_check,
    krylov_bogoliubov,
    marginal_distance,
)
from memsde.lyapunov import fluctuation_envelope_ratios, gaussian_kernel_spec, time_average_V, v_series
from memsde.spde import (
    GLModel,
    NSEModel,
    assumption_probe_dissipative,
    assumption_probe_lip,
    factorization_residual,
    gl_forcing,
    reconstruct_psi,
    simulate,
    sync_experiment,
)

pytestmark = pytest.mark.acceptance


def _gl_model():
    return GLModel(1.0, 64, gl_forcing(64, 2))


@pytest.fixture(scope="module")
def gl_run():
    """Stationary GL run (nu=1, modes below wavenumber 2 forced, cutoff 64), every step stored."""
    m = _gl_model()
    return m, simulate(m, np.zeros(m.size), 1e-3, 3000, seed=1, burn_in=2000)


def test_criterion_01_ou_sanity(verdict):
    t0 = time.time()
    a = MarkovLinearDrift(-1.0)
    past = HistoryPath.constant(0.0, 1e-3, 0.0)
    seeds = list(range(8))
    m = krylov_bogoliubov(a, past, T=2000.0, burn_in=10.0, dt=1e-3, seeds=seeds, thin=10)
    var = float(m.variance()[0])
    n = m.size // 2
    ma = type(m).uniform(m.samples[:n], m.T_window / 2)
    mb = type(m).uniform(m.samples[n:], m.T_window / 2)
    ks = marginal_distance(ma, mb)
    el = time.time() - t0
    ok = 0.45 <= var <= 0.55 and ks < 0.05 and el < 120
    verdict(1, "OU stationary variance and seed-group KS", ok, f"var={var:.4f}, KS={ks:.4f}, {el:.1f}s")
    assert ok


def test_criterion_02_gaussian_kernel_time_average(verdict):
    t0 = time.time()
    a = GaussianKernelDrift()
    spec = gaussian_kernel_spec(a)
    dt = 1e-2
    past = HistoryPath.constant(0.0, dt, 8.0)
    y = solve_cauchy(a, past, seed=0, cfg=SolverConfig(dt, 2200.0))
    v = v_series(concat(past, y), spec)[int(round(200 / dt)):]
    avg = time_average_V(v, spec, dt=dt).values[-1]
    el = time.time() - t0
    ok = avg <= 1.2 and el < 120
    verdict(2, "Gaussian-kernel drift: terminal running average of V <= 1.2", ok, f"avg={avg:.4f}, {el:.1f}s")
    assert ok


def test_criterion_03_gaussian_kernel_coupling(verdict):
    t0 = time.time()
    a = GaussianKernelDrift()
    dt = 1e-3
    x1 = HistoryPath.constant(0.0, dt, 8.0)
    s = np.ones(x1.n)
    s[0] = 0.0  # pasts must share the present value
    x2 = HistoryPath(s, dt)
    r = coupling_experiment(a, x1, x2, seed=3, T=20.0)
    el = time.time() - t0
    ok = bool(r.dominated) and r.fitted_rate <= -0.9 and el < 60
    verdict(3, "Gaussian-kernel coupling gap dominated by C e^-t", ok,
            f"C={r.C:.4g}, rate={r.fitted_rate:.3f}, dominated={r.dominated}, {el:.1f}s")
    assert ok


def test_criterion_04_pathdep_closed_form(verdict):
    t0 = time.time()
    a = PathDependentKernelDrift()
    errs = []
    for c in (0.5, 1.0, 2.0):
        x = HistoryPath.constant(c, 1e-5, 1.0)
        errs.append(abs(a.psi_hat(x) - c * c / (2 + c)))
    el = time.time() - t0
    ok = max(errs) < 1e-8 and el < 1.0
    verdict(4, "path-dependent kernel: constant-past closed form", ok, f"max err={max(errs):.2e}, {el:.2f}s")
    assert ok


def test_criterion_05_girsanov_martingale(verdict):
    t0 = time.time()
    a1 = MarkovLinearDrift(0.0, 0.0)
    a2 = MarkovLinearDrift(0.0, 1.0)
    dt, n = 1e-2, 100
    past = HistoryPath.constant(0.0, dt, 0.0)
    cfg = SolverConfig(dt, 1.0)
    dens, zero_ok = [], True
    for i in range(10_000):
        w = sample_wiener(5, i, 1, dt, n)
        traj = concat(past, euler_maruyama(a1, past, w, cfg))
        dens.append(math.exp(girsanov_logdensity(a1, a2, traj, w).log_density))
        if i < 100:
            same = girsanov_logdensity(a1, a1, traj, w)
            zero_ok &= same.log_density == 0.0 and same.novikov_stat == 0.0
    mean = float(np.mean(dens))
    el = time.time() - t0
    ok = 0.95 <= mean <= 1.05 and zero_ok and el < 60
    verdict(5, "Girsanov density has mean one; identical drifts give zero", ok,
            f"mean={mean:.4f}, identical->0: {zero_ok}, {el:.1f}s")
    assert ok


def _picard_euler_ratio(a, past_value, seed):
    fine = sample_wiener(seed, 0, 1, 5e-4, 2000)
    coarse = fine.coarsen(2)
    gaps = []
    for w in (coarse, fine):
        past = HistoryPath.constant(past_value, w.dt, 8.0)
        cfg = SolverConfig(w.dt, 1.0)
        ye = euler_maruyama(a, past, w, cfg).samples
        yp = picard_solve(a, past, w, cfg).samples
        gaps.append(float(np.max(np.abs(ye - yp))))
    return gaps[0] / gaps[1], gaps


def test_criterion_06_picard_euler_agreement(verdict):
    t0 = time.time()
    out = {}
    for name, a in (("markov", MarkovLinearDrift(-1.0)), ("gaussian_kernel", GaussianKernelDrift())):
        out[name], _ = _picard_euler_ratio(a, 0.5, seed=11)
    el = time.time() - t0
    ok = all(1.5 <= r <= 3.0 for r in out.values()) and el < 60
    verdict(6, "Picard/Euler sup gap halves with dt", ok,
            ", ".join(f"{k} ratio={v:.3f}" for k, v in out.items()) + f", {el:.1f}s")
    assert ok


def test_criterion_07_gl_synchronization(verdict):
    t0 = time.time()
    m = _gl_model()
    assert 4 * math.pi**2 * m.nu * m.forcing.n0**2 > 1  # threshold for slaving
    rng = np.random.default_rng(7)
    hb = np.where(m.mask_h, 0.1 * rng.standard_normal(m.size), 0.0)
    r = sync_experiment(m, 1e-3, 20.0, seed=2, h0_a=np.zeros(m.size), h0_b=hb)
    reached = r.gap <= 1e-8 * r.gap[0]
    el = time.time() - t0
    ok = bool(reached.any()) and r.fitted_rate < 0 and abs(r.fitted_rate) >= 0.5 and el < 120
    t_hit = float(r.times[np.argmax(reached)]) if reached.any() else math.nan
    verdict(7, "GL slaved high modes synchronize", ok,
            f"gap<1e-8*initial at t={t_hit:.3f}, rate={r.fitted_rate:.2f}, {el:.1f}s")
    assert ok


def test_criterion_08_psi_lookback(verdict, gl_run):
    t0 = time.time()
    m, run = gl_run
    ell = np.array([m.parts(s)[0] for s in run.states])
    hist = HistoryPath(ell[::-1], run.dt)
    r = reconstruct_psi(m, hist, psi_tol=1e-8)
    lam = m.lam[m.split.h_idx]

    def unorm(d):
        return math.sqrt(float(np.sum((1 + lam) * d * d)))

    doubled = reconstruct_psi(m, hist, lookback=2 * r.lookback)
    d_double = unorm(doubled.h - r.h)
    h0 = 0.1 * np.random.default_rng(8).standard_normal(lam.size)
    other = reconstruct_psi(m, hist, h0=h0, lookback=r.lookback)
    d_h0 = unorm(other.h - r.h)
    el = time.time() - t0
    ok = r.converged and d_double < 1e-8 and d_h0 < 1e-8 and el < 120
    verdict(8, "Psi converges under lookback doubling and forgets h0", ok,
            f"lookback={r.lookback:.3f}, doubling change={d_double:.2e}, h0 change={d_h0:.2e}, {el:.1f}s")
    assert ok


def test_criterion_09_factorization(verdict, gl_run):
    t0 = time.time()
    m, run = gl_run
    idx = np.arange(1000, run.states.shape[0], 100)
    lookbacks = [0.002, 0.004, 0.008, 0.016, 0.032, 0.064, 0.128]
    med = [float(np.median(factorization_residual(m, run.states, run.dt, lookback=lb, indices=idx).residual))
           for lb in lookbacks]
    conv = float(np.median(factorization_residual(m, run.states, run.dt, lookback=None, indices=idx).residual))
    seq = med + [conv]
    # within 10%; values below 1e-13 are at the rounding floor of the reconstruction
    mono = all(b <= 1.1 * a or b < 1e-13 for a, b in zip(seq[:-1], seq[1:]))
    el = time.time() - t0
    ok = conv < 1e-6 and mono and el < 180
    verdict(9, "high modes factor through the low-mode past", ok,
            f"median residual={conv:.2e}, monotone={mono}, seq={', '.join(f'{v:.1e}' for v in seq)}, {el:.1f}s")
    assert ok


def test_criterion_10_assumption_audits(verdict):
    t0 = time.time()
    m = _gl_model()
    run = simulate(m, np.zeros(m.size), 1e-3, 20000, seed=3, burn_in=2000, every=10)
    S = run.states
    rng = np.random.default_rng(10)
    fails = 0
    for _ in range(1000):
        i, j = rng.integers(S.shape[0], size=2)
        fails += not assumption_probe_dissipative(m, S[i], S[j]).ok
        ell, h = m.parts(S[i])
        _, g = m.parts(S[j])
        fails += not assumption_probe_lip(m, ell, h, g).ok
    el = time.time() - t0
    ok = fails == 0 and el < 60
    verdict(10, "dissipativity and low-mode Lipschitz probes on 1000 pairs", ok, f"failures={fails}, {el:.1f}s")
    assert ok


def test_criterion_11_fluctuation_growth(verdict):
    t0 = time.time()
    a = GaussianKernelDrift()
    spec = gaussian_kernel_spec(a)
    dt = 1e-2
    past = HistoryPath.constant(0.0, dt, 8.0)
    y = solve_cauchy(a, past, seed=4, cfg=SolverConfig(dt, 8200.0))
    v = v_series(concat(past, y), spec)[int(round(200 / dt)):]
    r2000, r4000 = fluctuation_envelope_ratios(v[::-1], dt, spec, 0.75, [2000.0, 4000.0])
    growth = r4000 / r2000 - 1
    el = time.time() - t0
    ok = growth < 0.10 and el < 120
    verdict(11, "|FV| envelope ratio against 1+|t|^0.75 stable under T doubling", ok,
            f"ratio(2000)={r2000:.3f}, ratio(4000)={r4000:.3f}, growth={100 * growth:.1f}%, {el:.1f}s")
    assert ok


def test_criterion_12_increment_tails(verdict):
    t0 = time.time()
    dt = 1e-2
    lags = [0.05, 0.1, 0.2]
    z = [0.25, 0.5, 0.75, 1.0, 1.5]
    past = HistoryPath.constant(0.0, dt, 8.0)
    cfg = SolverConfig(dt, 5000.0)
    tables = {}
    for name, a in (("drift-free", MarkovLinearDrift(0.0, 0.0)), ("gaussian_kernel", GaussianKernelDrift())):
        y = solve_cauchy(a, past, seed=6, cfg=cfg).samples
        tables[name] = increment_tail_check(y, lags, z, dt, a.along(past, y))
    C = max(t.C_fit for t in tables.values())  # one constant for every row of both runs
    dominated = all(r.empirical_prob <= C * r.unit_bound for t in tables.values() for r in t.rows)
    within = all(C <= t.C_theory for t in tables.values())
    el = time.time() - t0
    ok = dominated and within and el < 60
    verdict(12, "increment exceedances dominated by C(z^-4+z^-2)lag^2", ok,
            f"C={C:.3f}, C_theory=" + "/".join(f"{t.C_theory:.1f}" for t in tables.values()) + f", {el:.1f}s")
    assert ok


def test_criterion_13_nse(verdict):
    t0 = time.time()
    rng = np.random.default_rng(13)
    inviscid = NSEModel(0.1, 64)
    w = inviscid.random_field(rng, 10, 1.0)
    worst = 0.0
    for _ in range(20):
        w1 = inviscid.advect_rk4(w, 1e-4)
        for f in (inviscid.energy, inviscid.enstrophy):
            worst = max(worst, abs(f(w1) - f(w)) / f(w))
        w = w1
    m = NSEModel(0.1, 64, n0=3, amplitude=1.0)
    hb = m.random_field(rng, m.n // 3, 0.1)
    r = sync_experiment(m, 5e-4, 20.0, seed=13, h0_a=np.zeros_like(hb), h0_b=hb)
    ratio = float(r.gap[-1] / r.gap[0])
    el = time.time() - t0
    ok = worst < 1e-10 and ratio < 1e-3 and not r.diverged and el < 300
    verdict(13, "NSE advection conserves energy/enstrophy; forced run synchronizes", ok,
            f"max per-step drift={worst:.1e}, gap ratio={ratio:.1e}, {el:.1f}s")
    assert ok
