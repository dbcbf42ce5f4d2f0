"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_core`` extension is unavailable, and as the
reference the compiled kernels are tested against. The scalar filter is
vectorized across trials; each step is a handful of array operations.
"""

import math

import numpy as np

SINGLE, UNIFORM, GAUSS, INTERVAL = 0, 1, 2, 3

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _phi_diffs(alpha, beta):
    swap = np.abs(alpha) > np.abs(beta)
    ref = np.where(swap, beta, alpha)
    other = np.where(swap, alpha, beta)
    sign = np.where(swap, -1.0, 1.0)
    e = np.expm1(-0.5 * (other - ref) * (other + ref))
    p = np.exp(-0.5 * ref * ref) * _INV_SQRT_2PI
    return sign * p * e, sign * p * ((other - ref) + other * e)


def _continuous(mu, var, table):
    dmu = np.zeros_like(mu)
    dvar = np.zeros_like(var)
    for kind, w, h, rvar, p1, p2 in table:
        kind = int(kind)
        if kind == UNIFORM:
            continue
        if kind == INTERVAL:
            s2 = var + rvar
            s = np.sqrt(s2)
            alpha = (p1 - mu) / s
            beta = (p2 - mu) / s
            z, zp = _phi_diffs(alpha, beta)
            K = h * math.sqrt(2.0 * math.pi * rvar)
            dmu += w * (var * (K * z / s))
            dvar += w * (var * var * (K * zp / s2))
            continue
        s = var + rvar if kind == SINGLE else var + rvar + p2
        v = mu - p1
        rate = h * np.sqrt(rvar / s) * np.exp(-0.5 * v * v / s)
        g = var / s
        dmu += w * (g * v * rate)
        dvar += w * (g * (1.0 - v * v / s) * var * rate)
    return dmu, dvar


def adf_scalar_batch(mu0, var0, a, b, d2, dt, steps, table, ev_trial, ev_step, ev_theta, ev_comp,
                     continuous=True, jitter=False):
    """Run the scalar filter for ``B`` trials; returns ``(mu, var, fail_step)``.

    ``mu`` and ``var`` have shape ``(B, steps + 1)``; entries after a failure
    are NaN and ``fail_step`` holds the failing step (``-1`` if none).
    """
    B = mu0.shape[0]
    out_mu = np.full((B, steps + 1), np.nan)
    out_var = np.full((B, steps + 1), np.nan)
    fail = np.full(B, -1, dtype=np.int64)
    mu = mu0.astype(float).copy()
    var = var0.astype(float).copy()
    out_mu[:, 0] = mu
    out_var[:, 0] = var
    alive = np.ones(B, dtype=bool)
    rvars = table[:, 3]

    order = np.argsort(ev_step, kind="stable")
    ev_trial = ev_trial[order]
    ev_step = ev_step[order]
    ev_theta = ev_theta[order]
    ev_comp = ev_comp[order]
    starts = np.searchsorted(ev_step, np.arange(steps + 2), side="left")

    for k in range(1, steps + 1):
        dmu = a * mu + b
        dvar = 2.0 * a * var + d2
        if continuous:
            cm, cv = _continuous(mu, var, table)
            dmu = dmu + cm
            dvar = dvar + cv
        ref = var
        mu = mu + dmu * dt
        var = var + dvar * dt
        bad = alive & ~(var > 0.0)
        if bad.any():
            if jitter:
                fix = bad & np.isfinite(var) & np.isfinite(mu)
                var = np.where(fix, 1e-12 * ref, var)
                bad = bad & ~fix
            fail[bad] = k
            alive &= ~bad
        for j in range(starts[k], starts[k + 1]):
            i = ev_trial[j]
            if not alive[i]:
                continue
            m_i = mu[i]
            v_i = var[i]
            g = v_i / (v_i + rvars[ev_comp[j]])
            m_i = m_i + g * (ev_theta[j] - m_i)
            nv = v_i - g * v_i
            if not nv > 0.0:
                if jitter and math.isfinite(nv):
                    nv = 1e-12 * v_i
                else:
                    fail[i] = k
                    alive[i] = False
            mu[i] = m_i
            var[i] = nv
        out_mu[alive, k] = mu[alive]
        out_var[alive, k] = var[alive]
        mu = np.where(alive, mu, np.nan)
        var = np.where(alive, var, np.nan)
    return out_mu, out_var, fail


def systematic_resample(weights, u):
    """Indices drawn at ``u + k / P`` through the cumulative weights."""
    P = weights.shape[0]
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    points = u + np.arange(P) / P
    return np.minimum(np.searchsorted(cum, points, side="right"), P - 1).astype(np.int64)


def euler_maruyama(A, b, x0, dt, noise):
    """``x_{k+1} = x_k + (A x_k + b) dt + noise_k``; returns ``(steps + 1, n)``.

    Stops at the first non-finite state; returns the index of that step
    (``-1`` when the path stays finite).
    """
    steps, n = noise.shape
    out = np.empty((steps + 1, n))
    x = np.array(x0, dtype=float)
    out[0] = x
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported through the return value
        for k in range(steps):
            x = x + (A @ x + b) * dt + noise[k]
            if not np.all(np.isfinite(x)):
                out[k + 1:] = np.nan
                return out, k + 1
            out[k + 1] = x
    return out, -1
