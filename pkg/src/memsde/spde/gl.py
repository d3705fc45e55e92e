"""Galerkin truncation of ``du = [nu u_xx + u - u^3] dt + G dB`` on the unit circle.

The state is a real coefficient vector on the L2-orthonormal basis
``[1, sqrt2 sin(2 pi x), sqrt2 cos(2 pi x), sqrt2 sin(4 pi x), ...]`` up to
wavenumber ``cutoff``: index ``2m-1`` is the sine and ``2m`` the cosine of
wavenumber ``m``.  The cubic term is evaluated on a grid of ``4*cutoff+2``
points, enough to project ``u^3`` onto the retained modes without aliasing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import BlowupError, ContractViolation
from .forcing import ForcingSpec, LHSplit, recompose, split_LH

__all__ = [
    "GLModel",
    "gl_forcing",
    "gl_rhs",
    "gl_wavenumbers",
    "SOBOLEV_CONSTANT",
    "gl_dissipative_constants",
    "gl_low_constants",
]

SQRT2 = math.sqrt(2.0)
# sup|f|^2 <= C_S (||f||^2 + ||f'||^2) on the unit circle: sum_m 1/(1 + 4 pi^2 m^2)
SOBOLEV_CONSTANT = 0.5 / math.tanh(0.5)


def gl_wavenumbers(cutoff: int) -> np.ndarray:
    return (np.arange(2 * cutoff + 1) + 1) // 2


def gl_forcing(cutoff: int, n0: int, amplitude: float = 1.0) -> ForcingSpec:
    """Force every mode with wavenumber ``m < n0`` (sine and cosine) with amplitude ``amplitude``."""
    m = gl_wavenumbers(cutoff)
    if not 1 <= n0 <= cutoff:
        raise ContractViolation("need 1 <= n0 <= cutoff")
    sigma = np.where(m < n0, float(amplitude), 0.0)
    return ForcingSpec(sigma, m.astype(float))


@dataclass(frozen=True, eq=False)
class GLModel:
    nu: float
    cutoff: int
    forcing: ForcingSpec | None = None
    cubic: bool = True
    lam: np.ndarray = field(init=False, repr=False)
    grid_size: int = field(init=False)

    kind = "gl"

    def __post_init__(self):
        if self.cutoff < 1:
            raise ContractViolation("cutoff must allow at least 3 modes")
        if not self.nu > 0:
            raise ContractViolation("nu must be positive")
        m = gl_wavenumbers(self.cutoff)
        lam = 4.0 * math.pi**2 * m.astype(float) ** 2
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "grid_size", 4 * self.cutoff + 2)
        if self.forcing is not None and self.forcing.size != self.size:
            raise ContractViolation("forcing does not match the number of modes")

    @property
    def size(self) -> int:
        return 2 * self.cutoff + 1

    @property
    def split(self) -> LHSplit:
        if self.forcing is None:
            raise ContractViolation("model has no forcing; the split is undefined")
        return LHSplit.from_forcing(self.forcing)

    @property
    def lam_real(self) -> np.ndarray:
        return self.lam

    @property
    def mask_l(self) -> np.ndarray:
        return self.forcing.sigma > 0

    @property
    def mask_h(self) -> np.ndarray:
        return self.forcing.sigma == 0

    def embed(self, ell, h) -> np.ndarray:
        """Native state from L and H coordinates."""
        return recompose(ell, h, self.split)

    def parts(self, c):
        return split_LH(c, self.split)

    def coords(self, c) -> np.ndarray:
        return np.asarray(c, dtype=float)

    def from_coords(self, c) -> np.ndarray:
        return np.asarray(c, dtype=float)

    # transforms ------------------------------------------------------
    def to_grid(self, c, n: int | None = None) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        n = self.grid_size if n is None else n
        K = self.cutoff
        a = np.zeros(c.shape[:-1] + (n // 2 + 1,), dtype=complex)
        a[..., 0] = c[..., 0]
        a[..., 1 : K + 1] = (c[..., 2::2] - 1j * c[..., 1::2]) / SQRT2
        return np.fft.irfft(a, n=n, norm="forward")

    def from_grid(self, u) -> np.ndarray:
        a = np.fft.rfft(np.asarray(u, dtype=float), norm="forward")
        K = self.cutoff
        c = np.empty(a.shape[:-1] + (self.size,))
        c[..., 0] = a[..., 0].real
        c[..., 2::2] = SQRT2 * a[..., 1 : K + 1].real
        c[..., 1::2] = -SQRT2 * a[..., 1 : K + 1].imag
        return c

    def derivative(self, c) -> np.ndarray:
        """Coefficients of ``u_x``."""
        c = np.asarray(c, dtype=float)
        k = 2 * math.pi * gl_wavenumbers(self.cutoff)[2::2]
        out = np.zeros_like(c)
        out[..., 1::2] = -k * c[..., 2::2]  # d/dx cos = -k sin
        out[..., 2::2] = k * c[..., 1::2]
        return out

    def cube(self, c) -> np.ndarray:
        """Projection of ``u^3`` onto the retained modes (alias-free)."""
        return self.from_grid(self.to_grid(c) ** 3)

    # dynamics --------------------------------------------------------
    def nonlinear(self, c) -> np.ndarray:
        """Explicit part ``u - P(u^3)`` of the vector field."""
        c = np.asarray(c, dtype=float)
        return c - self.cube(c) if self.cubic else c.copy()

    def F(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        return -self.nu * self.lam * c + self.nonlinear(c)

    def noise(self, dB) -> np.ndarray:
        """``G dB`` for standard increments ``dB`` on the forced coordinates."""
        f = self.forcing
        out = np.zeros(self.size)
        out[f.forced] = f.sigma[f.forced] * np.asarray(dB, dtype=float)
        return out

    def step(self, c, dt: float, noise=None) -> np.ndarray:
        """Semi-implicit Euler: implicit diagonal linear part, explicit ``u - u^3``, exact additive noise."""
        rhs = c + dt * self.nonlinear(c)
        if noise is not None:
            rhs = rhs + noise
        out = rhs / (1.0 + dt * self.nu * self.lam)
        if not np.all(np.isfinite(out)):
            raise BlowupError(-1, math.nan, math.inf, math.inf)
        return out

    def U(self, c) -> np.ndarray | float:
        """``||u||^2 + ||u_x||^2`` by Parseval."""
        c = np.asarray(c, dtype=float)
        return np.sum((1.0 + self.lam) * c * c, axis=-1)

    def norm(self, c) -> float:
        return float(np.linalg.norm(c))

    def inner(self, a, b) -> float:
        return float(np.dot(a, b))


def gl_rhs(u, nu: float, cutoff: int | None = None, cubic: bool = True) -> np.ndarray:
    """``nu u_xx + u - P(u^3)`` on coefficient vector ``u``."""
    u = np.asarray(u, dtype=float)
    K = (u.shape[-1] - 1) // 2 if cutoff is None else cutoff
    if u.shape[-1] != 2 * K + 1:
        raise ContractViolation("coefficient vector length must be 2*cutoff + 1")
    return GLModel(nu, K, cubic=cubic).F(u)


def gl_dissipative_constants(nu: float, n0: int) -> dict:
    """Constants for ``<F(u)-F(v), P_h(u-v)> <= |P_h(u-v)|^2 (-c1 + c2 U(u)) + c3 |P_l(u-v)|^p1 (1 + U(u)^p2 + U(v)^p2)``.

    ``c1 = 4 nu pi^2 n0^2 - 1`` comes from the smallest eigenvalue of H;
    ``c3`` bounds ``1 + 2|u|_inf^2 + 2|v|_inf^2`` with ``|f|_inf^2 <= C_S U(f)``.
    """
    return dict(c1=4 * nu * math.pi**2 * n0**2 - 1.0, c2=0.0, c3=1.0 + 2.0 * SOBOLEV_CONSTANT, p1=2.0, p2=1.0, gamma=1.0)


def gl_low_constants() -> dict:
    """Constants for ``|P_l(F(l+h) - F(l+g))|^2 <= c4 (1 + U(l+h)^p3 + U(l+g)^p3) |h-g|^p4``.

    ``|u^3 - v^3| <= 3/2 (u^2 + v^2)|u - v|`` pointwise, then Sobolev.
    """
    return dict(c4=4.5 * SOBOLEV_CONSTANT**2, p3=2.0, p4=2.0)
