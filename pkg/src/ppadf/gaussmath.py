"""Numerically stable standard-normal differences used by interval populations."""

import math

import numpy as np
from scipy import special

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def cdf_diff(alpha, beta):
    """``Phi(beta) - Phi(alpha)`` for ``alpha <= beta``, accurate in both tails.

    Intervals lying entirely in one tail are evaluated with the scaled
    complementary error function so the result keeps full relative precision.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    lower = beta <= 0.0
    lo = np.where(lower, -beta, alpha)
    hi = np.where(lower, -alpha, beta)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        ea = special.erfcx(lo / _SQRT2)
        eb = special.erfcx(hi / _SQRT2) * np.exp(-0.5 * (hi - lo) * (hi + lo))
        tail = 0.5 * np.exp(-0.5 * lo * lo) * (ea - eb)
        mid = 1.0 - 0.5 * special.erfc(beta / _SQRT2) - 0.5 * special.erfc(-alpha / _SQRT2)
    return np.where(lo >= 0.0, tail, mid)


def phi_diffs(alpha, beta):
    """``(phi(beta) - phi(alpha), beta phi(beta) - alpha phi(alpha))``.

    Factored around the endpoint nearer zero, so the difference is formed
    with ``expm1`` instead of subtracting two nearly equal densities.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    swap = np.abs(alpha) > np.abs(beta)
    ref = np.where(swap, beta, alpha)
    other = np.where(swap, alpha, beta)
    sign = np.where(swap, -1.0, 1.0)
    e = np.expm1(-0.5 * (other - ref) * (other + ref))
    p = np.exp(-0.5 * ref * ref) * _INV_SQRT_2PI
    return sign * p * e, sign * p * ((other - ref) + other * e)
