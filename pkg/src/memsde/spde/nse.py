"""2D Navier-Stokes on the unit torus in vorticity form.

``d omega = [nu Lap omega - u . grad omega] dt + G dB`` with
``u = (d_y psi, -d_x psi)`` and ``-Lap psi = omega``.  The native state is
the ``rfft2`` coefficient array (``norm="forward"``, so entries are Fourier
coefficients).  Products are formed on the ``n x n`` grid and truncated by
the 2/3 rule.  The real coordinates used for forcing and the L/H split
are the L2-orthonormal ``sqrt2 cos(2 pi k.x)``, ``sqrt2 sin(2 pi k.x)`` pairs over a
half-plane of retained wavevectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import BlowupError, ContractViolation
from .forcing import ForcingSpec, LHSplit, recompose, split_LH

__all__ = ["NSEModel", "nse_rhs", "nse_forcing"]

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class NSEModel:
    nu: float
    n: int = 64
    n0: int | None = None
    amplitude: float = 1.0
    kx: np.ndarray = field(init=False, repr=False)
    ky: np.ndarray = field(init=False, repr=False)
    lam: np.ndarray = field(init=False, repr=False)
    dealias: np.ndarray = field(init=False, repr=False)
    half: np.ndarray = field(init=False, repr=False)  # (m, 2) retained half-plane wavevectors
    forcing: ForcingSpec | None = field(init=False, repr=False)

    kind = "nse"

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise ContractViolation("grid size must be even and at least 8")
        if not self.nu > 0:
            raise ContractViolation("nu must be positive")
        n = self.n
        kx = np.fft.fftfreq(n, 1.0 / n)[:, None] * np.ones((1, n // 2 + 1))
        ky = np.arange(n // 2 + 1)[None, :] * np.ones((n, 1))
        kmax = n // 3
        dealias = (np.abs(kx) <= kmax) & (ky <= kmax)
        lam = 4 * math.pi**2 * (kx**2 + ky**2)
        half = [(a, b) for a in range(-kmax, kmax + 1) for b in range(0, kmax + 1) if b > 0 or a > 0]
        for name, val in (("kx", kx), ("ky", ky), ("lam", lam), ("dealias", dealias), ("half", np.array(half))):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "forcing", None if self.n0 is None else nse_forcing(self, self.n0, self.amplitude))
        if self.forcing is not None:
            basis = np.array([self.from_real(e) for e in np.eye(self.size)[self.forcing.forced]])
            object.__setattr__(self, "_noise_basis", basis * self.forcing.sigma[self.forcing.forced][:, None, None])
            lmask = np.zeros(self.kx.shape, dtype=bool)
            k2 = self.kx**2 + self.ky**2
            lmask[(k2 > 0) & (k2 < self.n0**2)] = True
            object.__setattr__(self, "mask_l", lmask)
            object.__setattr__(self, "mask_h", self.dealias & ~lmask & (k2 > 0))

    @property
    def size(self) -> int:
        """Number of real coordinates (two per half-plane wavevector)."""
        return 2 * self.half.shape[0]

    @property
    def shells(self) -> np.ndarray:
        r = np.sqrt((self.half**2).sum(axis=1))
        return np.repeat(r, 2)

    @property
    def split(self) -> LHSplit:
        return LHSplit.from_forcing(self.forcing)

    @property
    def lam_real(self) -> np.ndarray:
        return 4 * math.pi**2 * self.shells**2

    def embed(self, ell, h) -> np.ndarray:
        return self.from_real(recompose(ell, h, self.split))

    def parts(self, w):
        return split_LH(self.to_real(w), self.split)

    def coords(self, w) -> np.ndarray:
        return self.to_real(w)

    def from_coords(self, c) -> np.ndarray:
        return self.from_real(c)

    # real coordinates ------------------------------------------------
    def _pos(self):
        a, b = self.half[:, 0], self.half[:, 1]
        return np.mod(a, self.n), b

    def to_real(self, w) -> np.ndarray:
        i, j = self._pos()
        z = np.asarray(w)[..., i, j]
        out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
        out[..., 0::2] = SQRT2 * z.real
        out[..., 1::2] = -SQRT2 * z.imag
        return out

    def from_real(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        w = np.zeros((self.n, self.n // 2 + 1), dtype=complex)
        i, j = self._pos()
        z = (c[0::2] - 1j * c[1::2]) / SQRT2
        w[i, j] = z
        edge = self.half[:, 1] == 0
        w[np.mod(-self.half[edge, 0], self.n), 0] = np.conj(z[edge])
        return w

    # fields ------------------------------------------------------------
    def grid(self, w) -> np.ndarray:
        return np.fft.irfft2(w, s=(self.n, self.n), norm="forward")

    def spectral(self, f) -> np.ndarray:
        return np.fft.rfft2(f, norm="forward")

    def streamfunction(self, w) -> np.ndarray:
        psi = np.zeros_like(w)
        nz = self.lam > 0
        psi[nz] = w[nz] / self.lam[nz]
        return psi

    def velocity(self, w):
        psi = self.streamfunction(w)
        u1 = self.grid(2j * math.pi * self.ky * psi)
        u2 = self.grid(-2j * math.pi * self.kx * psi)
        return u1, u2

    def advection(self, w) -> np.ndarray:
        """Dealiased ``u . grad omega`` in spectral form."""
        w = np.where(self.dealias, w, 0)
        u1, u2 = self.velocity(w)
        wx = self.grid(2j * math.pi * self.kx * w)
        wy = self.grid(2j * math.pi * self.ky * w)
        return np.where(self.dealias, self.spectral(u1 * wx + u2 * wy), 0)

    def nonlinear(self, w) -> np.ndarray:
        return -self.advection(w)

    def F(self, w) -> np.ndarray:
        return -self.nu * self.lam * w + self.nonlinear(w)

    def noise(self, dB) -> np.ndarray:
        return np.tensordot(np.asarray(dB, dtype=float), self._noise_basis, axes=1)

    def step(self, w, dt: float, noise=None) -> np.ndarray:
        rhs = w + dt * self.nonlinear(w)
        if noise is not None:
            rhs = rhs + noise
        out = np.where(self.dealias, rhs / (1.0 + dt * self.nu * self.lam), 0)
        out[0, 0] = 0.0
        if not np.all(np.isfinite(out)):
            raise BlowupError(-1, math.nan, math.inf, math.inf)
        return out

    def advect_rk4(self, w, dt: float) -> np.ndarray:
        """One classical RK4 step of the inviscid, unforced advection ``omega_t = -u . grad omega``."""
        f = self.nonlinear
        k1 = f(w)
        k2 = f(w + 0.5 * dt * k1)
        k3 = f(w + 0.5 * dt * k2)
        k4 = f(w + dt * k3)
        return w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    # diagnostics ------------------------------------------------------
    def energy(self, w) -> float:
        u1, u2 = self.velocity(w)
        return 0.5 * float(np.mean(u1 * u1 + u2 * u2))

    def enstrophy(self, w) -> float:
        g = self.grid(w)
        return 0.5 * float(np.mean(g * g))

    def U(self, w) -> float:
        """``||grad u||^2``, which equals ``||omega||^2`` on the torus."""
        return float(np.sum(self.to_real(w) ** 2))

    def norm(self, w) -> float:
        return float(np.linalg.norm(self.to_real(w)))

    def inner(self, a, b) -> float:
        return float(np.dot(self.to_real(a), self.to_real(b)))

    def random_field(self, rng, kmax: int = 8, scale: float = 1.0) -> np.ndarray:
        c = rng.standard_normal(self.size) * scale
        c[self.shells > kmax] = 0.0
        return self.from_real(c)


def nse_forcing(model: NSEModel, n0: int, amplitude: float = 1.0) -> ForcingSpec:
    """Force every real mode with ``0 < |k| < n0``."""
    shells = model.shells
    return ForcingSpec(np.where(shells < n0, float(amplitude), 0.0), shells)


def nse_rhs(omega, nu: float, n: int | None = None) -> np.ndarray:
    """``nu Lap omega - u . grad omega`` for a spectral vorticity array."""
    omega = np.asarray(omega)
    n = omega.shape[0] if n is None else n
    return NSEModel(nu, n).F(omega)
