"""Stochastic differential equations whose drift depends on the whole past of the solution."""
from . import drift, ergodics, lyapunov, pathspace, solver
from .drift import (
    GaussianKernelDrift,
    GrowthBound,
    MarkovDrift,
    MarkovLinearDrift,
    MemoryDrift,
    PathDependentKernelDrift,
    drift_gap,
    verify_growth_bound,
)
from .errors import *  # noqa: F401,F403
from .pathspace import FullPath, FuturePath, HistoryPath, concat, shift_view
from .solver import SolverConfig, WienerPath, euler_maruyama, make_rng, picard_solve, sample_wiener, solve_cauchy

__version__ = "0.1.0"
