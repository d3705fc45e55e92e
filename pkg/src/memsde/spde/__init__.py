"""Spectral Galerkin SPDEs with low-mode forcing and their reduction to memory SDEs."""
from .forcing import ForcingSpec, LHSplit, recompose, split_LH
from .gl import (
    SOBOLEV_CONSTANT,
    GLModel,
    gl_dissipative_constants,
    gl_forcing,
    gl_low_constants,
    gl_rhs,
    gl_wavenumbers,
)
from .nse import NSEModel, nse_forcing, nse_rhs
from .reduction import (
    FactorResult,
    ProbeReport,
    PsiResult,
    ReducedDrift,
    SpdeRun,
    SyncResult,
    assumption_probe_dissipative,
    assumption_probe_lip,
    factorization_residual,
    lyapunov_U,
    reconstruct_psi,
    reduced_drift,
    simulate,
    spde_step,
    sync_experiment,
)
