"""Bootstrap particle filter for the marked point-process model.

Used as an independent reference for the assumed-density filter. Per grid
step: propagate particles with Euler-Maruyama, multiply weights by the
discretized point-process likelihood

    exp(-lambda_tot(x) dt) * prod_spikes lambda_comp(x; theta),

record statistics of the weighted ensemble, then resample systematically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ValidationError, WeightUnderflowError
from .model import GaussianBelief, LinearDynamics, Population, SensorShape, SpikeEvent, components
from .simulate import _rates


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray  # (P, n)
    weights: np.ndarray  # (P,), sums to 1

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pos.shape[0] != w.size:
            raise ValidationError([f"{pos.shape[0]} positions but {w.size} weights"])
        if w.size < 2:
            raise ValidationError(["a particle ensemble needs at least 2 particles"])
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError(["weights must be non-negative and sum to 1"])
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @property
    def P(self) -> int:
        return self.weights.size

    def ess(self) -> float:
        return 1.0 / float(np.sum(self.weights**2))


def _normalize(logw: np.ndarray, step=None) -> np.ndarray:
    top = np.max(logw)
    if not np.isfinite(top):
        raise WeightUnderflowError(
            f"all particle weights vanished at step {step}; the spike is impossible "
            "under every particle", step=step,
        )
    w = np.exp(logw - top)
    w /= w.sum()
    return w


def pf_init(belief0: GaussianBelief, P: int, seed=None) -> ParticleEnsemble:
    """``P`` i.i.d. draws from the initial belief with uniform weights."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    L = np.linalg.cholesky(belief0.cov)
    pos = belief0.mean + rng.standard_normal((P, belief0.n)) @ L.T
    return ParticleEnsemble(pos, np.full(P, 1.0 / P))


def systematic_resample(weights, u: float) -> np.ndarray:
    """Indices selected by the points ``u + k / P``, ``k = 0..P-1``; ``u`` in ``[0, 1/P)``."""
    w = np.asarray(weights, dtype=float)
    if not 0.0 <= u < 1.0 / w.size + 1e-15:
        raise ValueError("offset u must lie in [0, 1/P)")
    return kernels.systematic_resample(w, u)


def propagate(positions: np.ndarray, dyn: LinearDynamics, dt: float, rng) -> np.ndarray:
    xi = rng.standard_normal((positions.shape[0], dyn.q))
    return positions + (positions @ dyn.A.T + dyn.b) * dt + (xi @ dyn.D.T) * math.sqrt(dt)


def log_likelihood(
    positions: np.ndarray, sensor: SensorShape, pop: Population, dt: float, events: Sequence[SpikeEvent]
) -> np.ndarray:
    """Per-particle log-likelihood of one grid step with the given spikes."""
    ll = -_rates(sensor, pop, positions).sum(axis=1) * dt
    comps = components(sensor, pop)
    for ev in events:
        s = comps[ev.comp].sensor
        v = positions @ s.H.T - ev.theta
        with np.errstate(divide="ignore"):
            ll = ll + np.log(s.h) - 0.5 * np.einsum("ki,ij,kj->k", v, s.R, v)
    return ll


def pf_step(
    ens: ParticleEnsemble,
    dyn: LinearDynamics,
    sensor: SensorShape,
    pop: Population,
    dt: float,
    events_at_step: Sequence[SpikeEvent],
    rng,
    resample: bool = True,
) -> ParticleEnsemble:
    """Propagate, reweight and (by default) systematically resample."""
    weighted = reweight(ens, dyn, sensor, pop, dt, events_at_step, rng)
    if not resample:
        return weighted
    u = rng.random() / weighted.P
    return resample_ensemble(weighted, u)


def reweight(ens, dyn, sensor, pop, dt, events_at_step, rng, step=None) -> ParticleEnsemble:
    pos = propagate(ens.positions, dyn, dt, rng)
    with np.errstate(divide="ignore"):
        logw = np.log(ens.weights) + log_likelihood(pos, sensor, pop, dt, events_at_step)
    return ParticleEnsemble(pos, _normalize(logw, step))


def resample_ensemble(ens: ParticleEnsemble, u: float) -> ParticleEnsemble:
    idx = systematic_resample(ens.weights, u)
    return ParticleEnsemble(ens.positions[idx], np.full(ens.P, 1.0 / ens.P))


def pf_moments(ens: ParticleEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and covariance (normalized by total weight, no bias correction)."""
    w = ens.weights
    mean = w @ ens.positions
    d = ens.positions - mean
    cov = (d * w[:, None]).T @ d
    return mean, 0.5 * (cov + cov.T)


@dataclass(frozen=True, eq=False)
class PFRun:
    """Moments of the weighted (pre-resampling) ensemble at every grid time.

    ``ks`` holds the KS distance to the moment-matched Gaussian for scalar
    states (NaN at ``t = 0`` and for n > 1). ``offsets`` are the resampling
    offsets used at each step (NaN where no resampling happened).
    """

    dt: float
    means: np.ndarray
    covs: np.ndarray
    ks: np.ndarray
    offsets: np.ndarray
    final: ParticleEnsemble = field(repr=False)


def pf_run(
    events: Sequence[SpikeEvent],
    dyn: LinearDynamics,
    sensor: SensorShape,
    pop: Population,
    belief0: GaussianBelief,
    dt: float,
    T: float,
    P: int,
    seed=None,
    *,
    resample: str = "every",
    ess_threshold: float = 0.5,
) -> PFRun:
    """Filter a spike train with ``P`` particles.

    ``resample="every"`` resamples at every step; ``"ess"`` only when the
    effective sample size drops below ``ess_threshold * P``.
    """
    from .adf import event_steps, n_steps
    from .metrics import ks_statistic

    if resample not in ("every", "ess"):
        raise ValueError("resample must be 'every' or 'ess'")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    steps = n_steps(T, dt)
    ev_steps = event_steps(events, dt, steps)
    n = belief0.n
    means = np.empty((steps + 1, n))
    covs = np.empty((steps + 1, n, n))
    ks = np.full(steps + 1, np.nan)
    offsets = np.full(steps + 1, np.nan)
    ens = pf_init(belief0, P, rng)
    means[0], covs[0] = pf_moments(ens)
    j = 0
    for k in range(1, steps + 1):
        j0 = j
        while j < len(events) and ev_steps[j] == k:
            j += 1
        ens = reweight(ens, dyn, sensor, pop, dt, events[j0:j], rng, step=k)
        means[k], covs[k] = pf_moments(ens)
        if n == 1 and covs[k][0, 0] > 0:
            ks[k] = ks_statistic(ens)
        if resample == "every" or ens.ess() < ess_threshold * P:
            u = rng.random() / P
            offsets[k] = u
            ens = resample_ensemble(ens, u)
    return PFRun(dt, means, covs, ks, offsets, ens)
