"""Compiled inner loops for the Pruefer phase integration and Sturm counts."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True, fastmath=True)
def phase_deviation_end(q, h, T, kappas):
    """theta_T(kappa) - kappa*T for each kappa (explicit midpoint, frozen q per cell).

    Integrates u' = -(q/kappa) sin^2(kappa t + u), u(0) = 0.
    """
    nfull = int(math.floor(T / h + 1e-9))
    if nfull > q.shape[0]:
        nfull = q.shape[0]
    rem = T - nfull * h
    if rem < 1e-12 * h:
        rem = 0.0
    nk = kappas.shape[0]
    inv = 1.0 / kappas
    kh = kappas * h
    half = 0.5 * kh
    u = np.zeros(nk)
    p = np.zeros(nk)
    for j in range(nfull):
        if j & 4095 == 0:
            # kappa*t reduced mod 2pi, resynchronized to bound the drift
            for i in range(nk):
                p[i] = np.fmod(kappas[i] * (j * h), TWO_PI)
        qj = q[j]
        if qj != 0.0:
            c = 0.5 * h * qj
            for i in range(nk):
                s1 = math.sin(p[i] + u[i])
                um = u[i] - c * inv[i] * s1 * s1
                s2 = math.sin(p[i] + half[i] + um)
                u[i] -= 2.0 * c * inv[i] * s2 * s2
        for i in range(nk):
            pi_ = p[i] + kh[i]
            if pi_ >= TWO_PI:
                pi_ -= TWO_PI
            p[i] = pi_
    out = u
    if rem > 0.0:
        qj = q[nfull]
        t = nfull * h
        for i in range(nk):
            k = kappas[i]
            s1 = math.sin(k * t + u[i])
            um = u[i] - 0.5 * rem * qj * inv[i] * s1 * s1
            s2 = math.sin(k * (t + 0.5 * rem) + um)
            out[i] = u[i] - rem * qj * inv[i] * s2 * s2
    return out


@njit(cache=True)
def phase_radius_path(q, h, T, kappa):
    """Mesh, theta deviation u_t = theta_t - kappa t, and log r_t along [0, T]."""
    nfull = int(math.floor(T / h + 1e-9))
    if nfull > q.shape[0]:
        nfull = q.shape[0]
    rem = T - nfull * h
    if rem < 1e-12 * h:
        rem = 0.0
    m = nfull + 1 + (1 if rem > 0.0 else 0)
    mesh = np.empty(m)
    dev = np.empty(m)
    logr = np.empty(m)
    mesh[0] = 0.0
    dev[0] = 0.0
    logr[0] = 0.0
    inv = 1.0 / kappa
    u = 0.0
    lr = 0.0
    for j in range(m - 1):
        if j < nfull:
            dt = h
        else:
            dt = rem
        qj = q[j]
        t = j * h
        s1 = math.sin(kappa * t + u)
        um = u - 0.5 * dt * qj * inv * s1 * s1
        thm = kappa * (t + 0.5 * dt) + um
        s2 = math.sin(thm)
        u -= dt * qj * inv * s2 * s2
        lr += dt * 0.5 * qj * inv * math.sin(2.0 * thm)
        mesh[j + 1] = t + dt
        dev[j + 1] = u
        logr[j + 1] = lr
    return mesh, dev, logr


@njit(cache=True)
def sturm_count(diag, off2, shift):
    """Number of eigenvalues of the symmetric tridiagonal matrix strictly below shift.

    ``off2`` holds squared off-diagonals. Counts negative pivots of the LDL^T
    factorization of (T - shift I).
    """
    n = diag.shape[0]
    count = 0
    d = diag[0] - shift
    if d < 0.0:
        count += 1
    for i in range(1, n):
        if d == 0.0:
            d = 1e-300
        d = diag[i] - shift - off2[i - 1] / d
        if d < 0.0:
            count += 1
    return count


@njit(cache=True)
def bisect_eigenvalues(diag, off2, lo, hi, k_start, k_stop, tol):
    """Eigenvalues with sorted indices k_start..k_stop-1 inside [lo, hi] by bisection."""
    m = k_stop - k_start
    out = np.empty(m)
    for idx in range(m):
        k = k_start + idx
        a = lo
        b = hi
        # invariant: count(a) <= k < count(b)
        while b - a > tol:
            c = 0.5 * (a + b)
            if c == a or c == b:
                break
            if sturm_count(diag, off2, c) <= k:
                a = c
            else:
                b = c
        out[idx] = 0.5 * (a + b)
    return out
