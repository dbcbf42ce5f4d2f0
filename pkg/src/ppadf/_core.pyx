# cython: language_level=3
"""Compiled hot loops: batched scalar filter, systematic resampling, and
Euler-Maruyama integration. Semantics match ``_fallback`` exactly; results
agree to rounding."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, sqrt, fabs, isfinite, M_PI

cnp.import_array()

cdef enum:
    SINGLE = 0
    UNIFORM = 1
    GAUSS = 2
    INTERVAL = 3

cdef double INV_SQRT_2PI = 1.0 / sqrt(2.0 * M_PI)


cdef inline void _phi_diffs(double alpha, double beta, double* z, double* zp) noexcept nogil:
    cdef double ref, other, sign, e, p
    if fabs(alpha) > fabs(beta):
        ref = beta
        other = alpha
        sign = -1.0
    else:
        ref = alpha
        other = beta
        sign = 1.0
    e = expm1(-0.5 * (other - ref) * (other + ref))
    p = exp(-0.5 * ref * ref) * INV_SQRT_2PI
    z[0] = sign * p * e
    zp[0] = sign * p * ((other - ref) + other * e)


cdef inline void _continuous(double mu, double var, const double[:, ::1] table,
                             double* dmu, double* dvar) noexcept nogil:
    cdef Py_ssize_t c
    cdef int kind
    cdef double w, h, rvar, p1, p2, s, s2, v, rate, g, K, z, zp, alpha, beta
    dmu[0] = 0.0
    dvar[0] = 0.0
    for c in range(table.shape[0]):
        kind = <int>table[c, 0]
        w = table[c, 1]
        h = table[c, 2]
        rvar = table[c, 3]
        p1 = table[c, 4]
        p2 = table[c, 5]
        if kind == UNIFORM:
            continue
        if kind == INTERVAL:
            s2 = var + rvar
            s = sqrt(s2)
            alpha = (p1 - mu) / s
            beta = (p2 - mu) / s
            _phi_diffs(alpha, beta, &z, &zp)
            K = h * sqrt(2.0 * M_PI * rvar)
            dmu[0] += w * (var * (K * z / s))
            dvar[0] += w * (var * var * (K * zp / s2))
            continue
        if kind == SINGLE:
            s = var + rvar
        else:
            s = var + rvar + p2
        v = mu - p1
        rate = h * sqrt(rvar / s) * exp(-0.5 * v * v / s)
        g = var / s
        dmu[0] += w * (g * v * rate)
        dvar[0] += w * (g * (1.0 - v * v / s) * var * rate)


def adf_scalar_batch(const double[::1] mu0, const double[::1] var0, double a, double b, double d2,
                     double dt, Py_ssize_t steps, const double[:, ::1] table,
                     const cnp.int64_t[::1] ev_trial, const cnp.int64_t[::1] ev_step,
                     const double[::1] ev_theta, const cnp.int64_t[::1] ev_comp,
                     bint continuous=True, bint jitter=False):
    cdef Py_ssize_t B = mu0.shape[0]
    cdef Py_ssize_t E = ev_trial.shape[0]
    out_mu_a = np.full((B, steps + 1), np.nan)
    out_var_a = np.full((B, steps + 1), np.nan)
    fail_a = np.full(B, -1, dtype=np.int64)
    cdef double[:, ::1] out_mu = out_mu_a
    cdef double[:, ::1] out_var = out_var_a
    cdef cnp.int64_t[::1] fail = fail_a

    # events grouped per trial, stable in step then input order
    order_a = np.lexsort((np.arange(E), np.asarray(ev_step), np.asarray(ev_trial))).astype(np.int64)
    cdef cnp.int64_t[::1] order = order_a
    cdef Py_ssize_t i, k, j, jj
    cdef double mu, var, dmu, dvar, cm, cv, ref, g, nv
    cdef int failed

    with nogil:
        j = 0
        for i in range(B):
            while j < E and ev_trial[order[j]] < i:
                j += 1
            mu = mu0[i]
            var = var0[i]
            out_mu[i, 0] = mu
            out_var[i, 0] = var
            failed = 0
            for k in range(1, steps + 1):
                dmu = a * mu + b
                dvar = 2.0 * a * var + d2
                if continuous:
                    _continuous(mu, var, table, &cm, &cv)
                    dmu = dmu + cm
                    dvar = dvar + cv
                ref = var
                mu = mu + dmu * dt
                var = var + dvar * dt
                if not (var > 0.0):
                    if jitter and isfinite(var) and isfinite(mu):
                        var = 1e-12 * ref
                    else:
                        failed = 1
                if not failed:
                    while j < E and ev_trial[order[j]] == i and ev_step[order[j]] == k:
                        jj = order[j]
                        g = var / (var + table[ev_comp[jj], 3])
                        mu = mu + g * (ev_theta[jj] - mu)
                        nv = var - g * var
                        if not (nv > 0.0):
                            if jitter and isfinite(nv):
                                nv = 1e-12 * var
                            else:
                                failed = 1
                        var = nv
                        j += 1
                        if failed:
                            break
                if failed:
                    fail[i] = k
                    break
                out_mu[i, k] = mu
                out_var[i, k] = var
            while j < E and ev_trial[order[j]] == i:
                j += 1
    return out_mu_a, out_var_a, fail_a


def systematic_resample(const double[::1] weights, double u):
    cdef Py_ssize_t P = weights.shape[0]
    idx_a = np.empty(P, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = idx_a
    cdef Py_ssize_t k, i = 0
    cdef double cum = weights[0]
    cdef double point
    with nogil:
        for k in range(P):
            point = u + <double>k / <double>P
            while cum <= point and i < P - 1:
                i += 1
                cum += weights[i]
            idx[k] = i
    return idx_a


def euler_maruyama(const double[:, ::1] A, const double[::1] b, const double[::1] x0, double dt,
                   const double[:, ::1] noise):
    cdef Py_ssize_t steps = noise.shape[0]
    cdef Py_ssize_t n = noise.shape[1]
    out_a = np.empty((steps + 1, n))
    cdef double[:, ::1] out = out_a
    cdef double[::1] x = np.array(x0, dtype=float)
    cdef double[::1] xn = np.empty(n)
    cdef Py_ssize_t k, r, c
    cdef double acc
    cdef Py_ssize_t bad = -1
    with nogil:
        for r in range(n):
            out[0, r] = x[r]
        for k in range(steps):
            for r in range(n):
                acc = 0.0
                for c in range(n):
                    acc = acc + A[r, c] * x[c]
                xn[r] = x[r] + (acc + b[r]) * dt + noise[k, r]
            for r in range(n):
                x[r] = xn[r]
                out[k + 1, r] = x[r]
                if not isfinite(x[r]):
                    bad = k + 1
            if bad >= 0:
                break
    if bad >= 0:
        out_a[bad:] = np.nan
    return out_a, bad
