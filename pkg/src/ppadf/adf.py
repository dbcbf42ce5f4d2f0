"""Gaussian assumed-density filter for marked point-process observations.

The belief ``N(mu, Sigma)`` evolves through three additive terms:

* prior drift from the linear dynamics,
* continuous updates between spikes (information carried by the *absence*
  of spikes; depends on the population density),
* discontinuous updates at spikes (independent of the population).

All gains are computed in inverse-free forms so that a rank-deficient
sensor precision ``R`` or a zero population covariance is handled without
special cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import gaussmath
from .errors import SPDError, ValidationError
from .model import (
    Component,
    GaussianBelief,
    GaussianPop,
    IntervalUniform,
    LinearDynamics,
    Mixture,
    Population,
    SensorShape,
    Single,
    SpikeEvent,
    UniformAll,
    components,
    is_spd,
)


@dataclass(frozen=True, eq=False)
class SensorGain:
    """Gains for one population component at the current belief.

    ``S = (R^-1 + H Sigma H^T)^-1``; ``Z = (Sigma_pop + S^-1)^-1`` for a
    Gaussian population (``None`` otherwise); ``rate`` is the expected total
    event rate under the belief. For a mixture, ``S`` and ``Z`` are ``None``
    and ``parts`` holds the per-component gains (unweighted).
    """

    S: Optional[np.ndarray]
    Z: Optional[np.ndarray]
    rate: float
    parts: tuple = ()


@dataclass(frozen=True)
class IntervalTerms:
    """Standardized truncated-Gaussian quantities for an interval population."""

    alpha: float
    beta: float
    Z: float
    z: float
    zp: float


# ---------------------------------------------------------------------------
# gains and expected rates
# ---------------------------------------------------------------------------


def _gain_S(cov: np.ndarray, H: np.ndarray, R: np.ndarray) -> np.ndarray:
    M = H @ cov @ H.T
    S = np.linalg.solve(np.eye(R.shape[0]) + R @ M, R)
    return 0.5 * (S + S.T)


def gain_S(cov: np.ndarray, H: np.ndarray, R: np.ndarray) -> np.ndarray:
    """``(R^-1 + H Sigma H^T)^-1``, evaluated as ``(I + R H Sigma H^T)^-1 R``."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not is_spd(cov):
        raise SPDError("belief covariance is not symmetric positive definite", cov=cov)
    return _gain_S(cov, np.atleast_2d(H), np.atleast_2d(R))


def _rate_coef(cov: np.ndarray, sensor: SensorShape) -> float:
    # sqrt(|S|/|R|) = |I + R H Sigma H^T|^(-1/2), valid for singular R too
    M = sensor.H @ cov @ sensor.H.T
    return 1.0 / math.sqrt(np.linalg.det(np.eye(sensor.m) + sensor.R @ M))


def _expected_rate(mean, cov, sensor: SensorShape, theta, S=None) -> float:
    if S is None:
        S = _gain_S(cov, sensor.H, sensor.R)
    v = np.asarray(theta, dtype=float) - sensor.H @ mean
    return sensor.h * _rate_coef(cov, sensor) * math.exp(-0.5 * float(v @ S @ v))


def expected_rate(belief: GaussianBelief, sensor: SensorShape, theta) -> float:
    """Expected rate of one sensor with preferred stimulus ``theta`` under the belief."""
    return _expected_rate(belief.mean, belief.cov, sensor, theta)


def interval_terms(center: float, scale: float, a: float, b: float) -> IntervalTerms:
    """Truncated-Gaussian terms for ``N(center, scale^2)`` restricted to ``[a, b]``."""
    alpha = (a - center) / scale
    beta = (b - center) / scale
    Z = gaussmath.cdf_diff(alpha, beta)
    z, zp = gaussmath.phi_diffs(alpha, beta)
    return IntervalTerms(alpha, beta, float(Z), float(z), float(zp))


def _component_gain(mean, cov, comp: Component) -> SensorGain:
    sensor, pop = comp.sensor, comp.population
    S = _gain_S(cov, sensor.H, sensor.R)
    if isinstance(pop, Single):
        return SensorGain(S, None, _expected_rate(mean, cov, sensor, pop.theta, S))
    if isinstance(pop, UniformAll):
        m = sensor.m
        rate = sensor.h * math.sqrt((2.0 * math.pi) ** m / np.linalg.det(sensor.R))
        return SensorGain(S, None, rate)
    if isinstance(pop, GaussianPop):
        Z = np.linalg.solve(np.eye(sensor.m) + S @ pop.cov, S)
        Z = 0.5 * (Z + Z.T)
        coef = _rate_coef(cov, sensor) / math.sqrt(np.linalg.det(np.eye(sensor.m) + pop.cov @ S))
        v = pop.c - sensor.H @ mean
        return SensorGain(S, Z, sensor.h * coef * math.exp(-0.5 * float(v @ Z @ v)))
    if isinstance(pop, IntervalUniform):
        rvar = 1.0 / float(sensor.R[0, 0])
        s2 = rvar + float((sensor.H @ cov @ sensor.H.T)[0, 0])
        terms = interval_terms(float((sensor.H @ mean)[0]), math.sqrt(s2), pop.a, pop.b)
        return SensorGain(S, None, sensor.h * math.sqrt(2.0 * math.pi * rvar) * terms.Z)
    raise ValidationError([f"unsupported population component {type(pop).__name__}"])


def expected_rate_pop(belief: GaussianBelief, sensor: SensorShape, pop: Population) -> SensorGain:
    """Gains and expected total event rate of the whole population."""
    return _population_gain(belief.mean, belief.cov, sensor, pop)


def _population_gain(mean, cov, sensor, pop) -> SensorGain:
    comps = components(sensor, pop)
    if not isinstance(pop, Mixture):
        return _component_gain(mean, cov, comps[0])
    parts = tuple(_component_gain(mean, cov, c) for c in comps)
    rate = sum(c.weight * g.rate for c, g in zip(comps, parts))
    return SensorGain(None, None, rate, parts)


# ---------------------------------------------------------------------------
# update terms
# ---------------------------------------------------------------------------


def _component_drift(mean, cov, comp: Component):
    """Continuous-update derivatives ``(dmu/dt, dSigma/dt)`` of one component."""
    sensor, pop = comp.sensor, comp.population
    n = mean.size
    if isinstance(pop, UniformAll):
        return np.zeros(n), np.zeros((n, n))
    H = sensor.H
    SH = cov @ H.T  # Sigma H^T
    if isinstance(pop, IntervalUniform):
        rvar = 1.0 / float(sensor.R[0, 0])
        s2 = rvar + float((H @ cov @ H.T)[0, 0])
        s = math.sqrt(s2)
        t = interval_terms(float((H @ mean)[0]), s, pop.a, pop.b)
        K = sensor.h * math.sqrt(2.0 * math.pi * rvar)
        dmu = SH[:, 0] * (K * t.z / s)
        dcov = np.outer(SH[:, 0], SH[:, 0]) * (K * t.zp / s2)
        return dmu, dcov
    gain = _component_gain(mean, cov, comp)
    if isinstance(pop, Single):
        G, center = gain.S, pop.theta
    else:
        G, center = gain.Z, pop.c
    v = H @ mean - center
    Gv = G @ v
    dmu = SH @ Gv * gain.rate
    dcov = SH @ (G - np.outer(Gv, Gv)) @ SH.T * gain.rate
    return dmu, dcov


def continuous_terms(belief: GaussianBelief, sensor: SensorShape, pop: Population):
    """Time derivatives ``(dmu/dt, dSigma/dt)`` of the continuous update."""
    return _continuous_drift(belief.mean, belief.cov, sensor, pop)


def _continuous_drift(mean, cov, sensor, pop):
    n = mean.size
    dmu = np.zeros(n)
    dcov = np.zeros((n, n))
    for comp in components(sensor, pop):
        if isinstance(comp.population, UniformAll):
            continue
        m_i, c_i = _component_drift(mean, cov, comp)
        dmu += comp.weight * m_i
        dcov += comp.weight * c_i
    return dmu, 0.5 * (dcov + dcov.T)


def _prior_drift(mean, cov, dyn: LinearDynamics):
    dmu = dyn.A @ mean + dyn.b
    AS = dyn.A @ cov
    return dmu, AS + AS.T + dyn.D @ dyn.D.T


def _enforce_spd(mean, cov, ref_trace, jitter, step):
    cov = 0.5 * (cov + cov.T)
    if not np.all(np.isfinite(cov)) or not np.all(np.isfinite(mean)):
        raise SPDError(f"non-finite belief at step {step}", step=step, mean=mean, cov=cov)
    w, V = np.linalg.eigh(cov)
    if w[0] > 0:
        return cov
    if not jitter:
        raise SPDError(
            f"covariance lost positive definiteness at step {step} (min eigenvalue {w[0]:.3g})",
            step=step, mean=mean, cov=cov,
        )
    floor = 1e-12 * ref_trace
    w = np.maximum(w, floor)
    cov = (V * w) @ V.T
    return 0.5 * (cov + cov.T)


def prior_step(belief: GaussianBelief, dyn: LinearDynamics, dt: float, jitter: bool = False) -> GaussianBelief:
    """One Euler step of the prior moment dynamics."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    dmu, dcov = _prior_drift(belief.mean, belief.cov, dyn)
    mean = belief.mean + dmu * dt
    cov = _enforce_spd(mean, belief.cov + dcov * dt, np.trace(belief.cov), jitter, None)
    return GaussianBelief(mean, cov)


def continuous_step(
    belief: GaussianBelief, sensor: SensorShape, pop: Population, dt: float, jitter: bool = False
) -> GaussianBelief:
    """One explicit Euler step of the continuous (between-spike) update."""
    if all(isinstance(c.population, UniformAll) for c in components(sensor, pop)):
        return belief
    dmu, dcov = continuous_terms(belief, sensor, pop)
    mean = belief.mean + dmu * dt
    cov = _enforce_spd(mean, belief.cov + dcov * dt, np.trace(belief.cov), jitter, None)
    return GaussianBelief(mean, cov)


def _spike(mean, cov, sensor: SensorShape, theta):
    S = _gain_S(cov, sensor.H, sensor.R)
    SH = cov @ sensor.H.T
    mean = mean + SH @ (S @ (np.asarray(theta, dtype=float) - sensor.H @ mean))
    cov = cov - SH @ S @ SH.T
    return mean, 0.5 * (cov + cov.T)


def spike_update(belief: GaussianBelief, sensor: SensorShape, theta) -> GaussianBelief:
    """Jump of the belief at a spike with mark ``theta`` from a sensor of this shape.

    Does not depend on the peak rate ``h``.
    """
    mean, cov = _spike(belief.mean, belief.cov, sensor, theta)
    return GaussianBelief(mean, cov)


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BeliefTrajectory:
    """Belief at every grid time ``k * dt``, ``k = 0..steps``."""

    dt: float
    means: np.ndarray  # (steps + 1, n)
    covs: np.ndarray  # (steps + 1, n, n)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.means.shape[0]) * self.dt

    @property
    def steps(self) -> int:
        return self.means.shape[0] - 1

    def belief(self, k: int) -> GaussianBelief:
        return GaussianBelief(self.means[k], self.covs[k])

    def sd(self) -> np.ndarray:
        """Posterior standard deviation; sqrt of the trace for n > 1."""
        return np.sqrt(np.trace(self.covs, axis1=1, axis2=2))


def n_steps(T: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not T >= dt:
        raise ValueError("T must be at least dt")
    return int(math.floor(T / dt + 1e-9))


def event_steps(events: Sequence[SpikeEvent], dt: float, steps: int) -> np.ndarray:
    """Grid step index of each event; checks ordering and grid alignment."""
    idx = np.empty(len(events), dtype=np.int64)
    last_t = -math.inf
    for i, ev in enumerate(events):
        if ev.t < last_t:
            raise ValidationError([f"events are not sorted by time (event {i} at t={ev.t!r})"])
        last_t = ev.t
        k = ev.t / dt
        kr = round(k)
        if abs(k - kr) > 1e-6 * max(1.0, abs(k)):
            raise ValidationError([f"event time t={ev.t!r} is not on the dt={dt!r} grid"])
        if kr < 1 or kr > steps:
            raise ValidationError([f"event time t={ev.t!r} is outside the filtered horizon"])
        idx[i] = kr
    return idx


def filter_run(
    events: Sequence[SpikeEvent],
    dyn: LinearDynamics,
    sensor: SensorShape,
    pop: Population,
    belief0: GaussianBelief,
    dt: float,
    T: float,
    *,
    continuous: bool = True,
    jitter: bool = False,
    backend: str = "auto",
) -> BeliefTrajectory:
    """Filter a spike train over ``[0, T]`` on a grid of step ``dt``.

    Each step applies the prior and continuous terms, both evaluated at the
    start-of-step belief, then the jump of every spike stamped at the step's
    right endpoint, using the post-drift belief. ``continuous=False`` gives
    the uniform-coding filter (continuous terms forced to zero).

    Scalar models with ``H = 1`` are routed to the batched kernel
    (``backend="auto"`` or ``"kernel"``); ``backend="python"`` forces the
    general matrix implementation.
    """
    steps = n_steps(T, dt)
    ev_steps = event_steps(events, dt, steps)
    comps = components(sensor, pop)

    from . import kernels

    if backend != "python" and kernels.scalar_supported(dyn, sensor, pop):
        table = kernels.component_table(sensor, pop)
        thetas = np.array([float(ev.theta[0]) for ev in events])
        ev_comp = np.array([ev.comp for ev in events], dtype=np.int64)
        res = kernels.adf_scalar_batch(
            np.array([belief0.mean[0]]), np.array([belief0.cov[0, 0]]),
            float(dyn.A[0, 0]), float(dyn.b[0]), float((dyn.D @ dyn.D.T)[0, 0]),
            dt, steps, table,
            np.zeros(len(events), dtype=np.int64), ev_steps, thetas, ev_comp,
            continuous=continuous, jitter=jitter,
        )
        if res.fail_step[0] >= 0:
            k = int(res.fail_step[0])
            raise SPDError(
                f"covariance lost positive definiteness at step {k}",
                step=k, mean=res.mu[0, k - 1:k], cov=res.var[0, k - 1:k].reshape(1, 1),
            )
        return BeliefTrajectory(dt, res.mu[0][:, None], res.var[0][:, None, None])
    if backend == "kernel":
        raise ValueError("kernel backend only supports scalar models with H = 1")

    n = belief0.n
    means = np.empty((steps + 1, n))
    covs = np.empty((steps + 1, n, n))
    mean = belief0.mean.copy()
    cov = belief0.cov.copy()
    means[0], covs[0] = mean, cov
    j = 0
    for k in range(1, steps + 1):
        dmu, dcov = _prior_drift(mean, cov, dyn)
        if continuous:
            cm, cc = _continuous_drift(mean, cov, sensor, pop)
            dmu = dmu + cm
            dcov = dcov + cc
        ref = np.trace(cov)
        mean = mean + dmu * dt
        cov = _enforce_spd(mean, cov + dcov * dt, ref, jitter, k)
        while j < len(events) and ev_steps[j] == k:
            ev = events[j]
            ref = np.trace(cov)
            mean, cov = _spike(mean, cov, comps[ev.comp].sensor, ev.theta)
            cov = _enforce_spd(mean, cov, ref, jitter, k)
            j += 1
        means[k], covs[k] = mean, cov
    return BeliefTrajectory(dt, means, covs)
