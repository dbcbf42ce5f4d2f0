"""Hot-loop dispatch: compiled ``_core`` when importable, numpy otherwise.

Set ``PPADF_PURE_PYTHON=1`` before import to force the numpy fallback.
``BACKEND`` names the implementation in use.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _fallback
from .model import GaussianPop, IntervalUniform, Mixture, Single, UniformAll, components

if os.environ.get("PPADF_PURE_PYTHON", "") == "1":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"


@dataclass(frozen=True, eq=False)
class BatchResult:
    mu: np.ndarray  # (B, steps + 1)
    var: np.ndarray  # (B, steps + 1)
    fail_step: np.ndarray  # (B,), -1 where the run completed


_KIND = {Single: 0, UniformAll: 1, GaussianPop: 2, IntervalUniform: 3}


def scalar_supported(dyn, sensor, pop) -> bool:
    """True when the model can run on the scalar kernel (n = m = 1, H = 1, R > 0)."""
    if dyn.n != 1 or sensor.m != 1 or sensor.n != 1:
        return False
    for comp in components(sensor, pop):
        if comp.sensor.H[0, 0] != 1.0 or not comp.sensor.R[0, 0] > 0:
            return False
        if type(comp.population) not in _KIND:
            return False
    return True


def component_table(sensor, pop) -> np.ndarray:
    """Rows ``(kind, weight, h, sigma_r^2, p1, p2)`` describing a scalar population.

    ``p1, p2`` are ``theta, 0`` (single), ``c, sigma_pop^2`` (Gaussian) or
    ``a, b`` (interval).
    """
    rows = []
    for comp in components(sensor, pop):
        p = comp.population
        rvar = 1.0 / float(comp.sensor.R[0, 0])
        if isinstance(p, Single):
            p1, p2 = float(p.theta[0]), 0.0
        elif isinstance(p, GaussianPop):
            p1, p2 = float(p.c[0]), float(p.cov[0, 0])
        elif isinstance(p, IntervalUniform):
            p1, p2 = p.a, p.b
        else:
            p1, p2 = 0.0, 0.0
        rows.append((_KIND[type(p)], comp.weight, comp.sensor.h, rvar, p1, p2))
    return np.ascontiguousarray(rows, dtype=float)


def adf_scalar_batch(mu0, var0, a, b, d2, dt, steps, table, ev_trial, ev_step, ev_theta, ev_comp,
                     continuous=True, jitter=False) -> BatchResult:
    """Scalar filter over a batch of independent trials.

    Events are given as flat arrays; ``ev_trial[j]`` names the trial and
    ``ev_step[j]`` the grid step (right endpoint) of event ``j``. Events of
    one trial at one step are applied in input order.
    """
    mu, var, fail = _impl.adf_scalar_batch(
        np.ascontiguousarray(mu0, dtype=float),
        np.ascontiguousarray(var0, dtype=float),
        float(a), float(b), float(d2), float(dt), int(steps),
        np.ascontiguousarray(table, dtype=float),
        np.ascontiguousarray(ev_trial, dtype=np.int64),
        np.ascontiguousarray(ev_step, dtype=np.int64),
        np.ascontiguousarray(ev_theta, dtype=float),
        np.ascontiguousarray(ev_comp, dtype=np.int64),
        bool(continuous), bool(jitter),
    )
    return BatchResult(mu, var, fail)


def systematic_resample(weights, u: float) -> np.ndarray:
    return _impl.systematic_resample(np.ascontiguousarray(weights, dtype=float), float(u))


def euler_maruyama(A, b, x0, dt, noise):
    return _impl.euler_maruyama(
        np.ascontiguousarray(A, dtype=float),
        np.ascontiguousarray(b, dtype=float),
        np.ascontiguousarray(x0, dtype=float),
        float(dt),
        np.ascontiguousarray(noise, dtype=float),
    )
