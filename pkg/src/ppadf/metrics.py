"""Agreement and accuracy statistics between the ADF, the particle filter and truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .errors import NumericalError


@dataclass(frozen=True)
class ComparisonRecord:
    """ADF-vs-PF agreement at one grid time.

    ``eps_mu = (mu_adf - mu_pf) / sd_pf`` and ``eps_sigma = sd_adf / sd_pf``;
    ``ks`` is the KS distance of the PF ensemble to its moment-matched Gaussian.
    """

    t: float
    eps_mu: float
    eps_sigma: float
    ks: float


def ks_statistic(ens) -> float:
    """KS distance between a weighted scalar ensemble and its moment-matched Gaussian.

    The supremum of ``|F - G|`` is attained at a jump of the weighted
    empirical CDF ``F``; at each jump point both one-sided values ``F(x-)``
    and ``F(x)`` are compared against ``G(x)``.

    Parameters
    ----------
    ens : ParticleEnsemble
        Ensemble with scalar positions and positive weighted variance.

    Returns
    -------
    float
        Statistic in ``[0, 1]``.
    """
    x = np.asarray(ens.positions, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError("ks_statistic needs a scalar ensemble")
        x = x[:, 0]
    w = np.asarray(ens.weights, dtype=float)
    mean = float(w @ x)
    var = float(w @ (x - mean) ** 2)
    if not var > 0:
        raise NumericalError("degenerate ensemble: zero weighted variance")
    order = np.argsort(x, kind="stable")
    xs, ws = x[order], w[order]
    # merge tied positions into single jumps
    uniq, start = np.unique(xs, return_index=True)
    mass = np.add.reduceat(ws, start)
    upper = np.cumsum(mass) / mass.sum()
    lower = np.concatenate(([0.0], upper[:-1]))
    G = special.ndtr((uniq - mean) / math.sqrt(var))
    ks = max(np.max(np.abs(lower - G)), np.max(np.abs(upper - G)))
    return float(min(ks, 1.0))


def comparison_records(adf_traj, pf_result, start: int = 1) -> list[ComparisonRecord]:
    """Records for grid steps ``start..steps`` of a scalar ADF run and a PF run on one grid."""
    mu_a = adf_traj.means[:, 0]
    sd_a = np.sqrt(adf_traj.covs[:, 0, 0])
    mu_p = pf_result.means[:, 0]
    sd_p = np.sqrt(pf_result.covs[:, 0, 0])
    if mu_a.shape != mu_p.shape:
        raise ValueError("ADF and PF runs are on different grids")
    dt = adf_traj.dt
    return [
        ComparisonRecord(k * dt, (mu_a[k] - mu_p[k]) / sd_p[k], sd_a[k] / sd_p[k], float(pf_result.ks[k]))
        for k in range(start, mu_a.size)
    ]


@dataclass(frozen=True)
class ErrorStats:
    eps_mu: tuple[float, float]  # (mean, sd)
    eps_sigma: tuple[float, float]
    count: int


def error_stats(records: Sequence[ComparisonRecord]) -> ErrorStats:
    """Sample mean and standard deviation (``ddof=1``) of ``eps_mu`` and ``eps_sigma``.

    The standard deviation is NaN for a single record.
    """
    if len(records) == 0:
        raise ValueError("error_stats needs at least one record")
    em = np.array([r.eps_mu for r in records], dtype=float)
    es = np.array([r.eps_sigma for r in records], dtype=float)

    def pair(a):
        sd = float(np.std(a, ddof=1)) if a.size > 1 else math.nan
        return float(np.mean(a)), sd

    return ErrorStats(pair(em), pair(es), em.size)


def _window_index(t: float, dt: float) -> int:
    return int(round(t / dt))


def _check_window(window, dt: float, steps: int) -> tuple[int, int]:
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise ValueError("window needs t1 > t0")
    k0, k1 = _window_index(t0, dt), _window_index(t1, dt)
    if t0 < -1e-9 * dt or k1 > steps:
        raise ValueError(f"window [{t0}, {t1}] is outside the horizon [0, {steps * dt}]")
    return k0, k1


def mse_window(truth, est, window) -> float:
    """Squared error ``trace[(x - mu)(x - mu)^T]`` integrated over ``[t0, t1)``.

    Left-endpoint Riemann sum: grid points ``t_k`` with ``t0 <= t_k < t1``
    each contribute ``dt`` times their squared error, so the measure is
    additive over adjacent windows.
    """
    dt = truth.dt
    x = np.asarray(truth.states, dtype=float)
    mu = np.asarray(est.means, dtype=float)
    if x.shape != mu.shape or not math.isclose(dt, est.dt, rel_tol=1e-12):
        raise ValueError("truth and estimate are not on the same grid")
    k0, k1 = _check_window(window, dt, x.shape[0] - 1)
    err = x[k0:k1] - mu[k0:k1]
    return float(dt * np.sum(err * err))


def avg_posterior_sd(beliefs, window) -> float:
    """Mean posterior standard deviation over grid points in ``[t0, t1]`` (inclusive).

    For vector states the standard deviation is ``sqrt(trace(Sigma))``.
    """
    dt = beliefs.dt
    covs = np.asarray(beliefs.covs, dtype=float)
    t0, t1 = float(window[0]), float(window[1])
    if t1 < t0:
        raise ValueError("window needs t1 >= t0")
    k0, k1 = _window_index(t0, dt), _window_index(t1, dt)
    if k0 < 0 or k1 > covs.shape[0] - 1:
        raise ValueError(f"window [{t0}, {t1}] is outside the horizon")
    tr = np.trace(covs[k0:k1 + 1], axis1=1, axis2=2)
    return float(np.mean(np.sqrt(tr)))
