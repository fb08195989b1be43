"""Unitary short-time propagators for the truncated instantaneous-basis problem.

In the phase time tau = int dt / L(t)**2 (hbar = m = 1) the Schroedinger-picture
coefficients c_n obey

    i dc/dtau = (K - i g(tau) C) c,     K = diag(n**2 pi**2 / 2),  g = L dL/dt,

with C the constant box coupling matrix.  Steps use the fourth-order
two-point Gauss-Legendre Magnus expansion; the exponential is applied either
by a Chebyshev expansion of its action or by a dense eigendecomposition,
whichever is cheaper for the step.  Time-independent generators (square-root
wall, held wall) are diagonalised once and reused.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import eigh
from scipy.special import jv

_GAUSS_OFFSET = math.sqrt(3.0) / 6.0
_COMMUTATOR_WEIGHT = math.sqrt(3.0) / 12.0


def coupling_matrix(n_levels: int) -> np.ndarray:
    """Dimensionless box matrix C_kn = L <u_k | d u_n / dL>.

    C_kn = 2 k n (-1)**(k+n) / (k**2 - n**2) off the diagonal, zero on it.
    """
    n = np.arange(1, n_levels + 1, dtype=float)
    k = n[:, None]
    m = n[None, :]
    sign = np.where((k + m) % 2 == 0, 1.0, -1.0)
    diff = k**2 - m**2
    np.fill_diagonal(diff, 1.0)
    C = 2.0 * k * m * sign / diff
    np.fill_diagonal(C, 0.0)
    return C


def chebyshev_expm_action(H, v, h, lo, hi, tol=1e-15):
    """exp(-i H h) v for Hermitian H with spectrum inside [lo, hi]."""
    half_width = max(0.5 * (hi - lo), 1e-300)
    centre = 0.5 * (hi + lo)
    R = half_width * h
    n_terms = int(R + 12.0 * max(1.0, R) ** (1.0 / 3.0) + 25)
    coeffs = jv(np.arange(n_terms), R)
    significant = np.nonzero(np.abs(coeffs) > tol)[0]
    n_terms = max(int(significant[-1]) + 2, 2) if significant.size else 2

    def apply(w):
        return (H @ w - centre * w) / half_width

    prev = v
    cur = -1j * apply(v)
    out = coeffs[0] * prev + 2.0 * coeffs[1] * cur
    for k in range(2, n_terms):
        nxt = -2j * apply(cur) + prev
        out += 2.0 * coeffs[k] * nxt
        prev, cur = cur, nxt
    return np.exp(-1j * centre * h) * out


class MagnusStepper:
    """Fourth-order Magnus step for the generator K - i g(tau) C."""

    def __init__(self, n_levels: int, g):
        self.n_levels = n_levels
        self.g = g
        self.kinetic = (np.arange(1, n_levels + 1) ** 2) * (math.pi**2 / 2.0)
        self.C = coupling_matrix(n_levels)
        self.KC = (self.kinetic[:, None] - self.kinetic[None, :]) * self.C
        self._cache = {}
        self.eigh_calls = 0
        self.matvecs = 0
        # break-even between one dense eigh and a number of matvecs
        self._eigh_threshold = min(max(3 * n_levels, 300), 1000)

    def _diagonalised(self, g_const):
        hit = self._cache.get(g_const)
        if hit is None:
            if g_const == 0.0:
                hit = (self.kinetic.copy(), None)
            else:
                H = np.diag(self.kinetic).astype(complex) - 1j * g_const * self.C
                w, V = eigh(H)
                self.eigh_calls += 1
                hit = (w, V)
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[g_const] = hit
        return hit

    def step(self, tau, h, c):
        g1 = float(self.g(tau + (0.5 - _GAUSS_OFFSET) * h))
        g2 = float(self.g(tau + (0.5 + _GAUSS_OFFSET) * h))
        if g1 == g2:
            w, V = self._diagonalised(g1)
            if V is None:
                return np.exp(-1j * w * h) * c
            return V @ (np.exp(-1j * w * h) * (V.conj().T @ c))
        H = -1j * (0.5 * (g1 + g2)) * self.C - (_COMMUTATOR_WEIGHT * h * (g1 - g2)) * self.KC
        H[np.diag_indices(self.n_levels)] += self.kinetic
        radius = np.abs(H).sum(axis=1) - self.kinetic
        lo = float(np.min(self.kinetic - radius))
        hi = float(np.max(self.kinetic + radius))
        if 0.5 * (hi - lo) * h > self._eigh_threshold:
            w, V = eigh(H)
            self.eigh_calls += 1
            return V @ (np.exp(-1j * w * h) * (V.conj().T @ c))
        self.matvecs += int(0.5 * (hi - lo) * h) + 25
        return chebyshev_expm_action(H, c, h, lo, hi)
