import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from memsde.drift import (
    GAUSSIAN_KERNEL_MASS,
    GaussianKernelDrift,
    GrowthBound,
    MarkovDrift,
    MarkovLinearDrift,
    PathDependentKernelDrift,
    drift_gap,
    eval_gaussian_kernel_drift,
    eval_markov_drift,
    eval_pathdep_kernel_drift,
    verify_growth_bound,
)
from memsde.errors import ContractViolation, DivergenceError, UnsupportedOperation
from memsde.lyapunov import eval_V_example
from memsde.pathspace import FuturePath, HistoryPath, concat, shift_view, weighted_norm

# independent oracle for the kernel mass int_{-inf}^0 e^{-s^2+s} ds
I0, _ = quad(lambda u: math.exp(-u * u - u), 0, math.inf, epsabs=1e-13, epsrel=1e-13)

small = st.floats(-2, 2, allow_nan=False)
short_paths = arrays(np.float64, st.integers(1, 400), elements=small)


def test_kernel_mass_oracle():
    assert GAUSSIAN_KERNEL_MASS == pytest.approx(I0, abs=1e-12)


def test_zero_path_gives_zero_drift():
    z = HistoryPath.constant(0.0, 1e-3, 8.0)
    assert eval_gaussian_kernel_drift(z)[0] == 0.0
    assert eval_pathdep_kernel_drift(z)[0] == 0.0


@pytest.mark.parametrize("c", [-1.5, -0.3, 0.5, 1.0, 2.0])
def test_gaussian_kernel_constant_past(c):
    x = HistoryPath.constant(c, 1e-3, 8.0)
    expected = -c * (1 + c * c * I0)
    assert eval_gaussian_kernel_drift(x)[0] == pytest.approx(expected, rel=1e-6)


def test_gaussian_kernel_truncation_and_window():
    a = GaussianKernelDrift()
    assert math.exp(-a.truncation_lag**2 - a.truncation_lag) == pytest.approx(1e-12, rel=1e-9)
    rng = np.random.default_rng(0)
    dt = 1e-2
    s = rng.normal(size=int(16 / dt) + 1)
    short = HistoryPath(s[: int(8 / dt) + 1], dt)
    long = HistoryPath(s, dt)
    assert abs(a(short)[0] - a(long)[0]) < 1e-12


def _psi_bound_integral(rho):
    f = lambda u: math.exp(-u * u - u) * (1 + u**rho) ** 2  # noqa: E731
    return quad(f, 0, math.inf)[0]


@given(short_paths, short_paths, st.sampled_from([0.5, 1.0, 2.0]))
def test_gaussian_kernel_lipschitz_bound(s1, s2, rho):
    dt = 0.02
    n = max(s1.size, s2.size)
    x = HistoryPath(np.resize(s1, n), dt)
    xt = HistoryPath(np.resize(s2, n), dt)
    a = GaussianKernelDrift()
    lhs = abs(a.psi(x) - a.psi(xt))
    d = HistoryPath(x.samples - xt.samples, dt)
    rhs = (weighted_norm(x, rho) + weighted_norm(xt, rho)) * weighted_norm(d, rho) * _psi_bound_integral(rho)
    assert lhs <= rhs * (1 + 1e-9) + 1e-14


@pytest.mark.parametrize("c", [-1.5, -0.5, 0.5, 1.0, 2.0, 4.0])
def test_pathdep_constant_past(c):
    x = HistoryPath.constant(c, 1e-4, 1.0)
    a = PathDependentKernelDrift()
    ph = c * c / (2 + c)
    assert a.psi_hat(x) == pytest.approx(ph, rel=1e-6)
    assert eval_pathdep_kernel_drift(x)[0] == pytest.approx(-c * (1 + ph) + ph * ph, rel=1e-6)


def test_pathdep_divergent_past_falls_back_to_zero():
    x = HistoryPath.constant(-3.0, 1e-3, 5.0)
    a = PathDependentKernelDrift()
    assert math.isinf(a.psi_hat(x))
    assert a(x)[0] == 3.0
    with pytest.raises(DivergenceError) as err:
        a.psi_hat(HistoryPath.constant(-3.0, 1e-2, 800.0), strict=True)
    assert err.value.lag is not None and err.value.lag > 0
    # a long window with a finite-but-huge value is also capped
    assert PathDependentKernelDrift(finiteness_cap=1.0)(HistoryPath.constant(-1.9, 1e-3, 2.0))[0] == pytest.approx(1.9)
    with pytest.raises(ContractViolation):
        PathDependentKernelDrift(finiteness_cap=0.0)


def test_markov_examples():
    x = HistoryPath([1.5, 0.0], 0.1)
    assert eval_markov_drift(lambda v: -v, x)[0] == -1.5
    assert eval_markov_drift(lambda v: 0 * v, x)[0] == 0.0
    a = MarkovDrift(lambda v: -v)
    rng = np.random.default_rng(1)
    for v in rng.normal(size=20):
        y = HistoryPath([v], 0.1)
        assert a(y)[0] * v <= 0 - 1.0 * v * v + 1e-15  # <a(x), x(0)> <= C1 - C2|x(0)|^2 with C1=0, C2=1


def test_markov_linear_matrix():
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    a = MarkovLinearDrift(A, [1.0, 0.0])
    x = HistoryPath([[1.0, 2.0]], 0.1)
    np.testing.assert_allclose(a(x), A @ [1.0, 2.0] + [1.0, 0.0])
    with pytest.raises(ContractViolation):
        MarkovLinearDrift(np.ones((2, 3)))


def _future(rng, x0, n, dt):
    return FuturePath(np.concatenate([[x0], x0 + np.cumsum(rng.normal(scale=math.sqrt(dt), size=n - 1))]), dt)


@pytest.mark.parametrize("a", [GaussianKernelDrift(), PathDependentKernelDrift(), MarkovLinearDrift(-1.0)])
def test_drift_gap_properties(a):
    rng = np.random.default_rng(2)
    dt = 1e-2
    x1 = HistoryPath(np.concatenate([[0.3], rng.normal(size=400)]), dt)
    x2 = HistoryPath(np.concatenate([[0.3], rng.normal(size=400)]), dt)
    y = _future(rng, 0.3, 200, dt)
    for t in (0.0, 0.5, 1.0, 1.99):
        g12 = drift_gap(a, x1, x2, y, t)
        assert g12 == drift_gap(a, x2, x1, y, t)
        assert drift_gap(a, x1, x1, y, t) == 0.0
        if isinstance(a, MarkovLinearDrift):
            assert g12 == 0.0
    with pytest.raises(ContractViolation):
        drift_gap(a, x1, HistoryPath([1.0, 0.0], dt), y, 0.5)


@pytest.mark.parametrize("a", [GaussianKernelDrift(), PathDependentKernelDrift()])
def test_along_matches_direct_evaluation(a):
    rng = np.random.default_rng(3)
    dt = 1e-2
    x = HistoryPath(0.5 * rng.normal(size=900), dt)
    y = _future(rng, x.present[0], 300, dt)
    fast = a.along(x, y.samples)[:, 0]
    guard = a.guard_along(x, y.samples)
    p = concat(x, y)
    for k in (0, 1, 17, 150, 299):
        h = shift_view(p, k * dt)
        assert fast[k] == pytest.approx(a(h)[0], rel=1e-9, abs=1e-12)
        assert guard[k] == pytest.approx(a.guard(h), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("a", [GaussianKernelDrift(), PathDependentKernelDrift()])
def test_evaluation_is_deterministic(a):
    x = HistoryPath(np.random.default_rng(4).normal(size=500), 1e-2)
    y = HistoryPath(x.samples.copy(), 1e-2)
    assert a(x).tobytes() == a(y).tobytes()


@pytest.mark.parametrize("a", [GaussianKernelDrift(), PathDependentKernelDrift()])
def test_quadrature_refinement_is_second_order(a):
    def value(dt):
        x = HistoryPath.from_function(lambda t: 0.5 + 0.4 * np.sin(t), dt, 6.0)
        return a(x)[0]

    v = [value(dt) for dt in (0.04, 0.02, 0.01)]
    ratio = (v[0] - v[1]) / (v[1] - v[2])
    assert 3.0 <= ratio <= 5.0


@given(arrays(np.float64, st.integers(1, 300), elements=st.floats(-3, 3)))
def test_gaussian_growth_bound_on_random_paths(s):
    a = GaussianKernelDrift()
    x = HistoryPath(s, 0.02)
    v = [eval_V_example("gaussian_kernel", x)]
    assert verify_growth_bound(a, v, x).ok


@given(arrays(np.float64, st.integers(1, 300), elements=st.floats(-1.5, 3)))
def test_pathdep_growth_bound_on_random_paths(s):
    a = PathDependentKernelDrift()
    x = HistoryPath(s, 0.02)
    v = [eval_V_example("pathdep_kernel", x)]
    if math.isinf(v[0]):
        return
    assert verify_growth_bound(a, v, x).ok


def test_growth_bound_examples():
    a = GaussianKernelDrift()
    z = HistoryPath.constant(0.0, 1e-2, 8.0)
    r = verify_growth_bound(a, [0.0], z)
    assert r.lhs == 0.0 and r.ok
    wrong = GaussianKernelDrift(growth=GrowthBound(K=0.0, beta=1.0, nu_weights=()))
    one = HistoryPath.constant(1.0, 1e-3, 8.0)
    r = verify_growth_bound(wrong, [eval_V_example("gaussian_kernel", one)], one)
    assert r.lhs == pytest.approx(1 + I0, rel=1e-6) and not r.ok
    with pytest.raises(UnsupportedOperation):
        verify_growth_bound(MarkovDrift(lambda v: -v), [0.0], z)


def test_streamer_matches_along_for_generic_drift():
    # a MarkovDrift wrapped as a generic memory drift goes through the buffer path
    a = MarkovDrift(lambda v: -2 * v)
    x = HistoryPath([0.2, 0.1], 0.1)
    fut = np.array([0.2, 0.3, -0.1, 0.4])
    st_ = a.streamer(x)
    out = [st_.drift()[0]]
    for v in fut[1:]:
        st_.push([v])
        out.append(st_.drift()[0])
    np.testing.assert_allclose(out, -2 * fut)
