import math

import numpy as np
import pytest

from memsde.drift import GaussianKernelDrift, MarkovDrift, MarkovLinearDrift, PathDependentKernelDrift
from memsde.errors import BlowupError, ContractionFailure, ContractViolation
from memsde.pathspace import HistoryPath
from memsde.solver import (
    SolverConfig,
    euler_maruyama,
    make_rng,
    picard_iterate,
    picard_solve,
    sample_wiener,
    solve_cauchy,
)


def test_noise_is_deterministic_and_streams_differ():
    a = sample_wiener(3, 0, 2, 1e-2, 500)
    b = sample_wiener(3, 0, 2, 1e-2, 500)
    c = sample_wiener(3, 1, 2, 1e-2, 500)
    assert a.increments.tobytes() == b.increments.tobytes()
    assert not np.array_equal(a.increments, c.increments)
    assert make_rng(7, 2).random() == make_rng(7, 2).random()


def test_noise_statistics():
    dt = 1e-2
    w = sample_wiener(0, 0, 2, dt, 200_000)
    var = w.increments.var(axis=0)
    assert np.all(np.abs(var / dt - 1) < 0.05)
    corr = np.corrcoef(w.increments.T)[0, 1]
    assert abs(corr) < 0.02
    other = sample_wiener(0, 1, 1, dt, 200_000).increments[:, 0]
    assert abs(np.corrcoef(w.increments[:, 0], other)[0, 1]) < 0.02


def test_coarsen_preserves_endpoint():
    w = sample_wiener(1, 0, 1, 1e-3, 1000)
    c = w.coarsen(4)
    assert c.dt == pytest.approx(4e-3) and c.n_steps == 250
    assert c.values()[-1, 0] == pytest.approx(w.values()[-1, 0], abs=1e-12)


def test_drift_free_solution_is_the_noise():
    dt = 1e-2
    past = HistoryPath.constant(0.7, dt, 1.0)
    w = sample_wiener(2, 0, 1, dt, 300)
    cfg = SolverConfig(dt, 3.0)
    y = euler_maruyama(MarkovLinearDrift(0.0, 0.0), past, w, cfg)
    np.testing.assert_allclose(y.samples[:, 0], 0.7 + w.values()[:, 0], atol=1e-12)
    yp = picard_solve(MarkovLinearDrift(0.0, 0.0), past, w, cfg)
    np.testing.assert_allclose(yp.samples, y.samples, atol=1e-12)


def test_solve_cauchy_is_bit_identical():
    cfg = SolverConfig(1e-2, 20.0)
    past = HistoryPath.constant(0.0, 1e-2, 8.0)
    for a in (GaussianKernelDrift(), PathDependentKernelDrift()):
        y1 = solve_cauchy(a, past, 5, cfg)
        y2 = solve_cauchy(a, past, 5, cfg)
        assert y1.samples.tobytes() == y2.samples.tobytes()
    assert not np.array_equal(solve_cauchy(a, past, 5, cfg).samples, solve_cauchy(a, past, 6, cfg).samples)


def test_ou_variance():
    dt = 1e-2
    past = HistoryPath.constant(0.0, dt, 0.0)
    y = solve_cauchy(MarkovLinearDrift(-1.0), past, 9, SolverConfig(dt, 5000.0)).samples[1000:, 0]
    # Euler stationary variance for X' = -X is 1/(2 - dt)
    assert y.var() == pytest.approx(1 / (2 - dt), rel=0.08)


@pytest.mark.parametrize("a", [GaussianKernelDrift(), PathDependentKernelDrift()])
def test_dissipative_drifts_do_not_blow_up(a):
    dt = 1e-2
    past = HistoryPath.constant(0.0, dt, 8.0)
    y = solve_cauchy(a, past, 1, SolverConfig(dt, 500.0))
    assert np.all(np.isfinite(y.samples)) and np.max(np.abs(y.samples)) < 10


def test_explosive_drift_blows_up_with_partial_path():
    dt = 1e-2
    past = HistoryPath.constant(1.0, dt, 0.0)
    a = MarkovDrift(lambda v: v * v * v)
    times = []
    for R in (1e2, 1e4, 1e8):
        with pytest.raises(BlowupError) as err:
            solve_cauchy(a, past, 0, SolverConfig(dt, 100.0, blowup_radius=R))
        e = err.value
        assert e.partial.shape[0] == e.step + 1
        times.append(e.time)
    assert times == sorted(times)


def test_exponential_growth_hits_radius_at_expected_time():
    dt = 1e-3
    past = HistoryPath.constant(1.0, dt, 0.0)
    with pytest.raises(BlowupError) as err:
        solve_cauchy(MarkovLinearDrift(5.0), past, 0, SolverConfig(dt, 100.0, blowup_radius=1e6))
    # |x| ~ e^{5t} reaches 1e6 (or its square, for a quadratic guard) within a few time units
    assert 0.5 < err.value.time < 10.0


def test_picard_zero_drift_converges_immediately():
    dt = 1e-2
    past = HistoryPath.constant(0.3, dt, 1.0)
    dW = sample_wiener(0, 0, 1, dt, 100).increments
    res = picard_iterate(MarkovLinearDrift(0.0, 0.0), past, dW, dt, 1e-12, 10)
    assert len(res.residuals) == 1 and res.residuals[0] == 0.0


@pytest.mark.parametrize("a", [MarkovLinearDrift(-1.0), GaussianKernelDrift()])
def test_picard_residuals_contract(a):
    dt = 1e-2
    past = HistoryPath.constant(0.5, dt, 8.0)
    dW = sample_wiener(1, 0, 1, dt, 50).increments
    res = picard_iterate(a, past, dW, dt, 1e-12, 100)
    r = np.array(res.residuals)
    assert r[-1] < 1e-12
    assert np.all(r[1:] <= r[:-1] + 1e-15)


def test_picard_failure_on_long_stiff_chunk():
    dt = 1e-2
    past = HistoryPath.constant(1.0, dt, 0.0)
    dW = np.zeros((1000, 1))
    with pytest.raises(ContractionFailure):
        picard_iterate(MarkovLinearDrift(-50.0), past, dW, dt, 1e-12, 60)


def test_picard_matches_euler_for_linear_drift():
    dt = 1e-3
    past = HistoryPath.constant(0.5, dt, 0.0)
    w = sample_wiener(4, 0, 1, dt, 2000)
    cfg = SolverConfig(dt, 2.0)
    ye = euler_maruyama(MarkovLinearDrift(-1.0), past, w, cfg).samples
    yp = picard_solve(MarkovLinearDrift(-1.0), past, w, cfg).samples
    assert np.max(np.abs(ye - yp)) < 5 * dt


def test_input_contracts():
    past = HistoryPath.constant(0.0, 1e-2, 1.0)
    with pytest.raises(ContractViolation):
        euler_maruyama(MarkovLinearDrift(-1.0), past, sample_wiener(0, 0, 1, 2e-2, 100), SolverConfig(1e-2, 1.0))
    with pytest.raises(ContractViolation):
        euler_maruyama(MarkovLinearDrift(-1.0), past, sample_wiener(0, 0, 1, 1e-2, 10), SolverConfig(1e-2, 1.0))
    with pytest.raises(ContractViolation):
        SolverConfig(0.0, 1.0)
    with pytest.raises(ContractViolation):
        solve_cauchy(MarkovLinearDrift(-1.0), past, 0, SolverConfig(1e-2, 1.0), method="rk4")
    assert math.isclose(SolverConfig(1e-2, 1.0).n_steps, 100)


def test_picard_contracts_by_half_on_short_chunks():
    dt = 1e-2
    past = HistoryPath.constant(0.5, dt, 8.0)
    dW = sample_wiener(1, 0, 1, dt, 50).increments
    r = np.array(picard_iterate(GaussianKernelDrift(), past, dW, dt, 1e-13, 100).residuals)
    assert np.all(r[1:] <= 0.5 * r[:-1])


def test_pathdep_drift_stays_finite_from_constant_past():
    dt = 1e-2
    past = HistoryPath.constant(1.0, dt, 8.0)
    y = solve_cauchy(PathDependentKernelDrift(), past, 0, SolverConfig(dt, 50.0))
    assert np.all(np.isfinite(y.samples))
