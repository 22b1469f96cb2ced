"""Optional numba-compiled RK4 inner loop for the spin dynamics.

Same math as dynamics._derivative in the complex representation
``(S^+ = S^x + i S^y, S^z)``; reductions run in fixed site order so results
are deterministic and independent of any parallel width.  Falls back to the
numpy path when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap


@njit(cache=True, fastmath=True)
def _deriv(splus, sz, cp, cd, bz, chi_p, chi_d, gamma_p, gamma_d,
           dsplus, dsz):
    n = splus.size
    ell_p = 0.0 + 0.0j
    ell_d = 0.0 + 0.0j
    for i in range(n):
        smin = np.conj(splus[i])
        ell_p += cp[i] * smin
        ell_d += cd[i] * smin
    dp = chi_p * ell_p
    dd = chi_d * ell_d
    ell_p_c = np.conj(ell_p)
    ell_d_c = np.conj(ell_d)
    for i in range(n):
        w = np.conj(cp[i]) * dp + np.conj(cd[i]) * dd
        dsplus[i] = -2.0j * bz[i] * splus[i] + 2.0j * sz[i] * np.conj(w)
        dsz[i] = -2.0 * (splus[i] * w).imag
        if gamma_p > 0.0:
            dsplus[i] += gamma_p * cp[i] * sz[i] * ell_p_c
            dsz[i] -= gamma_p * (np.conj(cp[i]) * splus[i] * ell_p).real
        if gamma_d > 0.0:
            dsplus[i] += gamma_d * cd[i] * sz[i] * ell_d_c
            dsz[i] -= gamma_d * (np.conj(cd[i]) * splus[i] * ell_d).real


@njit(cache=True, fastmath=True)
def rk4_chunk(splus, sz, cp, cd, bz, chi_p, chi_d, gamma_p, gamma_d,
              dt, n_steps):
    """Advance the state in place by ``n_steps`` fixed RK4 steps."""
    n = splus.size
    k1p = np.empty(n, np.complex128)
    k2p = np.empty(n, np.complex128)
    k3p = np.empty(n, np.complex128)
    k4p = np.empty(n, np.complex128)
    k1z = np.empty(n, np.float64)
    k2z = np.empty(n, np.float64)
    k3z = np.empty(n, np.float64)
    k4z = np.empty(n, np.float64)
    tp = np.empty(n, np.complex128)
    tz = np.empty(n, np.float64)
    for _ in range(n_steps):
        _deriv(splus, sz, cp, cd, bz, chi_p, chi_d, gamma_p, gamma_d,
               k1p, k1z)
        for i in range(n):
            tp[i] = splus[i] + 0.5 * dt * k1p[i]
            tz[i] = sz[i] + 0.5 * dt * k1z[i]
        _deriv(tp, tz, cp, cd, bz, chi_p, chi_d, gamma_p, gamma_d, k2p, k2z)
        for i in range(n):
            tp[i] = splus[i] + 0.5 * dt * k2p[i]
            tz[i] = sz[i] + 0.5 * dt * k2z[i]
        _deriv(tp, tz, cp, cd, bz, chi_p, chi_d, gamma_p, gamma_d, k3p, k3z)
        for i in range(n):
            tp[i] = splus[i] + dt * k3p[i]
            tz[i] = sz[i] + dt * k3z[i]
        _deriv(tp, tz, cp, cd, bz, chi_p, chi_d, gamma_p, gamma_d, k4p, k4z)
        sixth = dt / 6.0
        for i in range(n):
            splus[i] += sixth * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i])
            sz[i] += sixth * (k1z[i] + 2.0 * k2z[i] + 2.0 * k3z[i] + k4z[i])
