"""Forcing amplitudes and the forced/unforced (L, H) split of a real coefficient vector."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation

__all__ = ["ForcingSpec", "LHSplit", "split_LH", "recompose"]


@dataclass(frozen=True, eq=False)
class ForcingSpec:
    """Amplitude ``sigma_k`` and wavenumber magnitude ``|k|`` for every real coordinate.

    ``n0`` is the largest integer ``N`` such that every coordinate with
    ``|k| < N`` is forced; ``n1`` is the smallest integer ``N`` such that
    no coordinate with ``|k| >= N`` is forced.
    """

    sigma: np.ndarray
    shell: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        k = np.array(self.shell, dtype=float)
        if s.shape != k.shape or s.ndim != 1:
            raise ContractViolation("sigma and shell must be 1-D arrays of equal length")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ContractViolation("amplitudes must be finite and nonnegative")
        if not np.any(s > 0):
            raise ContractViolation("at least one mode must be forced")
        s.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "shell", k)

    @property
    def size(self) -> int:
        return self.sigma.shape[0]

    @property
    def forced(self) -> np.ndarray:
        return np.flatnonzero(self.sigma > 0)

    @property
    def d(self) -> int:
        return self.forced.shape[0]

    @property
    def n0(self) -> int:
        unforced = self.shell[self.sigma == 0]
        if unforced.size == 0:
            return int(math.floor(self.shell.max())) + 1
        return int(math.floor(unforced.min() + 1e-12))

    @property
    def n1(self) -> int:
        return int(math.floor(self.shell[self.sigma > 0].max() + 1e-12)) + 1

    def energy_moment(self, m: int, lambdas) -> float:
        """``E_m = sum lambda_k^m sigma_k^2``."""
        lam = np.asarray(lambdas, dtype=float)
        return float(np.sum(lam**m * self.sigma**2))

    def trace_GG(self) -> float:
        return float(np.sum(self.sigma**2))

    def split(self) -> "LHSplit":
        return LHSplit.from_forcing(self)


@dataclass(frozen=True, eq=False)
class LHSplit:
    """Index sets of the low (forced) space L and its complement H."""

    l_idx: np.ndarray
    h_idx: np.ndarray
    size: int

    def __post_init__(self):
        l = np.array(self.l_idx, dtype=np.intp)
        h = np.array(self.h_idx, dtype=np.intp)
        every = np.concatenate([l, h])
        if np.unique(every).size != every.size:
            raise ContractViolation("L and H index sets overlap")
        if every.size != self.size or (every.size and (every.min() < 0 or every.max() >= self.size)):
            raise ContractViolation("L and H must cover the coefficient vector exactly")
        l.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "l_idx", l)
        object.__setattr__(self, "h_idx", h)

    @classmethod
    def from_forcing(cls, forcing: ForcingSpec) -> "LHSplit":
        mask = forcing.sigma > 0
        return cls(np.flatnonzero(mask), np.flatnonzero(~mask), forcing.size)

    def check_full_rank(self, forcing: ForcingSpec) -> None:
        """Noise must act on every direction of L (and only there)."""
        if np.any(forcing.sigma[self.l_idx] == 0):
            raise ContractViolation("an unforced mode was placed in L; the reduced noise would be degenerate")
        if np.any(forcing.sigma[self.h_idx] > 0):
            raise ContractViolation("a forced mode was placed in H")

    @property
    def d(self) -> int:
        return self.l_idx.shape[0]

    def mask_l(self) -> np.ndarray:
        m = np.zeros(self.size, dtype=bool)
        m[self.l_idx] = True
        return m


def split_LH(state, split: LHSplit):
    """``(ell, h)``: the L coordinates and the H coordinates of ``state``."""
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != split.size:
        raise ContractViolation(f"state has {state.shape[-1]} coefficients, split covers {split.size}")
    return state[..., split.l_idx], state[..., split.h_idx]


def recompose(ell, h, split: LHSplit) -> np.ndarray:
    ell = np.asarray(ell, dtype=float)
    out = np.empty(ell.shape[:-1] + (split.size,))
    out[..., split.l_idx] = ell
    out[..., split.h_idx] = h
    return out
