"""Compiled inner loops for the built-in drifts.

Each Euler-Maruyama kernel returns ``(path, stop, guard)``: ``path`` holds
``n+1`` states, ``stop`` is the first step whose guard value reached the
blowup radius (or -1) and ``guard`` is that value.  After a stop the
remaining rows of ``path`` are left as NaN.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def em_markov_linear(x0, A, b, dW, dt, radius):
    n, d = dW.shape
    path = np.full((n + 1, d), np.nan)
    x = x0.copy()
    path[0] = x
    for k in range(n):
        ax = A @ x + b
        for i in range(d):
            x[i] = x[i] + ax[i] * dt + dW[k, i]
        path[k + 1] = x
        g = 0.0
        for i in range(d):
            g += x[i] * x[i]
        if not (g < radius):
            return path, k + 1, g
    return path, -1, 0.0


@njit(cache=True)
def em_gaussian_kernel(hist_sq, x0, w, dW, dt, radius):
    """``hist_sq``: squared past values newest first, already padded to ``len(w)``."""
    n = dW.shape[0]
    m = w.shape[0]
    buf = np.empty(2 * m)
    buf[:m] = hist_sq
    buf[m:] = hist_sq
    p = 0
    path = np.full(n + 1, np.nan)
    x = x0
    path[0] = x
    for k in range(n):
        psi = 0.0
        for j in range(m):
            psi += w[j] * buf[p + j]
        x = x - x * (1.0 + psi) * dt + dW[k]
        path[k + 1] = x
        p -= 1
        if p < 0:
            p = m - 1
        buf[p] = x * x
        buf[p + m] = x * x
        psi = 0.0
        for j in range(m):
            psi += w[j] * buf[p + j]
        g = x * x + psi * psi
        if not (g < radius):
            return path, k + 1, g
    return path, -1, 0.0


@njit(cache=True)
def pathdep_log_s_series(x, log_s0, dt):
    """Running ``log S_i`` with ``S_i = psi_hat_i + dt/2 x_i^2`` along chronological ``x``."""
    n = x.shape[0]
    out = np.empty(n)
    out[0] = log_s0
    for i in range(1, n):
        decay = -2.0 * dt - 0.5 * dt * (x[i - 1] + x[i])
        fresh = math.log(dt * x[i] * x[i]) if x[i] != 0.0 else -np.inf
        out[i] = _logaddexp(fresh, decay + out[i - 1])
    return out


@njit(cache=True)
def _psi_from_log_s(log_s, x, dt):
    if log_s > 709.0:
        return np.inf
    return math.exp(log_s) - 0.5 * dt * x * x


@njit(cache=True)
def em_pathdep_kernel(log_s0, x0, dW, dt, cap, radius):
    n = dW.shape[0]
    path = np.full(n + 1, np.nan)
    x = x0
    log_s = log_s0
    path[0] = x
    for k in range(n):
        psi_hat = _psi_from_log_s(log_s, x, dt)
        psi = psi_hat if psi_hat < cap else 0.0
        x_new = x + (-x * (1.0 + psi) + psi * psi) * dt + dW[k]
        decay = -2.0 * dt - 0.5 * dt * (x + x_new)
        fresh = math.log(dt * x_new * x_new) if x_new != 0.0 else -np.inf
        log_s = _logaddexp(fresh, decay + log_s)
        x = x_new
        path[k + 1] = x
        psi_hat = _psi_from_log_s(log_s, x, dt)
        g = x * x + psi_hat * psi_hat
        if not (g < radius):
            return path, k + 1, g
    return path, -1, 0.0
