"""Ground-truth simulation: Euler-Maruyama state paths and marked spike trains.

Spikes are generated by per-step Bernoulli thinning with at most one spike
per step: in step ``k`` a spike occurs with probability
``min(lambda_tot(x_k) dt, 1)`` and is stamped at the right endpoint
``(k + 1) dt``. Its mark is drawn from the law proportional to
``lambda(x_k; theta) f(dtheta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import gaussmath, kernels
from .adf import n_steps
from .errors import NumericalError
from .model import (
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
    steady_state_prior,
)

P_WARN = 0.1


@dataclass(frozen=True, eq=False)
class Trajectory:
    """State at every grid time ``k * dt``."""

    dt: float
    states: np.ndarray  # (steps + 1, n)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.states.shape[0]) * self.dt

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1


@dataclass(frozen=True, eq=False)
class Observations:
    trajectory: Trajectory
    events: list
    max_p: float = 0.0
    warnings: tuple = field(default_factory=tuple)
    spikes: "SpikeArrays | None" = field(default=None, repr=False)

    def __iter__(self):
        # allows ``traj, events = generate_observations(...)``
        yield self.trajectory
        yield self.events


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _sqrtm_psd(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def integrate_state(dyn: LinearDynamics, x0, dt: float, T: float, seed=None) -> Trajectory:
    """Euler-Maruyama path ``x_{k+1} = x_k + (A x_k + b) dt + D sqrt(dt) xi_k``."""
    rng = _rng(seed)
    steps = n_steps(T, dt)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    xi = rng.standard_normal((steps, dyn.q))
    noise = (xi @ dyn.D.T) * math.sqrt(dt)
    states, bad = kernels.euler_maruyama(dyn.A, dyn.b, x0, dt, noise)
    if bad >= 0:
        raise NumericalError(f"state became non-finite at step {bad}")
    return Trajectory(dt, states)


# ---------------------------------------------------------------------------
# rates and marks
# ---------------------------------------------------------------------------


def _component_rate(comp, X: np.ndarray) -> np.ndarray:
    sensor, pop = comp.sensor, comp.population
    m = sensor.m
    if isinstance(pop, UniformAll):
        return np.full(X.shape[0], sensor.h * math.sqrt((2.0 * math.pi) ** m / np.linalg.det(sensor.R)))
    Y = X @ sensor.H.T
    if isinstance(pop, Single):
        return sensor.rate(X, pop.theta)
    if isinstance(pop, GaussianPop):
        I = np.eye(m)
        W = np.linalg.solve(I + sensor.R @ pop.cov, sensor.R)
        W = 0.5 * (W + W.T)
        coef = sensor.h / math.sqrt(np.linalg.det(I + pop.cov @ sensor.R))
        v = Y - pop.c
        return coef * np.exp(-0.5 * np.einsum("ki,ij,kj->k", v, W, v))
    if isinstance(pop, IntervalUniform):
        sr = math.sqrt(1.0 / sensor.R[0, 0])
        y = Y[:, 0]
        return sensor.h * math.sqrt(2.0 * math.pi) * sr * gaussmath.cdf_diff((pop.a - y) / sr, (pop.b - y) / sr)
    raise TypeError(f"unsupported population {type(pop).__name__}")


def _rates(sensor, pop, X):
    comps = components(sensor, pop)
    return np.stack([c.weight * _component_rate(c, X) for c in comps], axis=1)


def total_rate(sensor: SensorShape, pop: Population, x) -> np.ndarray | float:
    """Total event rate ``int lambda(x; theta) f(dtheta)`` at state(s) ``x``.

    Accepts one state ``(n,)`` (returns a float) or a batch ``(K, n)``.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    r = _rates(sensor, pop, X).sum(axis=1)
    return float(r[0]) if single else r


def _draw_component(comp, Y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    sensor, pop = comp.sensor, comp.population
    K, m = Y.shape
    if isinstance(pop, Single):
        return np.tile(pop.theta, (K, 1))
    noise_cov = np.linalg.inv(sensor.R)
    if isinstance(pop, UniformAll):
        L = _sqrtm_psd(noise_cov)
        return Y + rng.standard_normal((K, m)) @ L.T
    if isinstance(pop, GaussianPop):
        # product of N(theta; Hx, R^-1) and N(theta; c, cov), without inverting cov
        gain = np.linalg.solve((pop.cov + noise_cov).T, pop.cov.T).T
        cov = (np.eye(m) - gain) @ pop.cov
        L = _sqrtm_psd(cov)
        mean = pop.c + (Y - pop.c) @ gain.T
        return mean + rng.standard_normal((K, m)) @ L.T
    if isinstance(pop, IntervalUniform):
        sr = math.sqrt(noise_cov[0, 0])
        y = Y[:, 0]
        lo = (pop.a - y) / sr
        hi = (pop.b - y) / sr
        u = rng.random(K)
        z = stats.truncnorm.ppf(u, lo, hi)
        return np.clip(y + sr * z, pop.a, pop.b)[:, None]
    raise TypeError(f"unsupported population {type(pop).__name__}")


def sample_marks(sensor: SensorShape, pop: Population, X: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw marks for spikes emitted at states ``X`` (K, n); returns ``(thetas, comps)``."""
    rng = _rng(rng)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = X.shape[0]
    comps = components(sensor, pop)
    Y = X @ sensor.H.T
    thetas = np.empty((K, sensor.m))
    if len(comps) == 1:
        idx = np.zeros(K, dtype=np.int64)
    else:
        r = _rates(sensor, pop, X)
        cum = np.cumsum(r, axis=1)
        u = rng.random(K) * cum[:, -1]
        idx = np.minimum((cum <= u[:, None]).sum(axis=1), len(comps) - 1).astype(np.int64)
    for i, comp in enumerate(comps):
        sel = np.flatnonzero(idx == i)
        if sel.size:
            thetas[sel] = _draw_component(comp, Y[sel], rng)
    return thetas, idx


def sample_mark(sensor: SensorShape, pop: Population, x, rng) -> tuple[np.ndarray, int]:
    """Draw the mark of a spike emitted at state ``x``; returns ``(theta, comp)``."""
    thetas, idx = sample_marks(sensor, pop, np.asarray(x, dtype=float)[None, :], rng)
    return thetas[0], int(idx[0])


# ---------------------------------------------------------------------------
# observation generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpikeArrays:
    """Spike train in array form: grid step (right endpoint), mark, component."""

    steps: np.ndarray  # (K,) int
    thetas: np.ndarray  # (K, m)
    comps: np.ndarray  # (K,) int
    max_p: float

    def to_events(self, dt: float) -> list[SpikeEvent]:
        return [
            SpikeEvent(k * dt, th, c)
            for k, th, c in zip(self.steps.tolist(), self.thetas, self.comps.tolist())
        ]


def draw_initial_state(dyn: LinearDynamics, rng, prior: GaussianBelief | None = None) -> np.ndarray:
    if prior is None:
        prior = steady_state_prior(dyn)
    L = np.linalg.cholesky(prior.cov)
    return prior.mean + L @ rng.standard_normal(prior.n)


def spikes_for_path(sensor: SensorShape, pop: Population, states: np.ndarray, dt: float, rng) -> SpikeArrays:
    """Thin the path ``states`` (steps + 1, n) into a spike train."""
    rng = _rng(rng)
    X = states[:-1]
    p = np.minimum(total_rate(sensor, pop, X) * dt, 1.0)
    u = rng.random(X.shape[0])
    hit = np.flatnonzero(u < p)
    thetas, comps = sample_marks(sensor, pop, X[hit], rng)
    return SpikeArrays(hit + 1, thetas, comps, float(p.max(initial=0.0)))


def generate_observations(
    dyn: LinearDynamics,
    sensor: SensorShape,
    pop: Population,
    dt: float,
    T: float,
    seed=None,
    x0=None,
    prior: GaussianBelief | None = None,
) -> Observations:
    """Simulate a state path and its spike train.

    The initial state is ``x0`` if given, else a draw from ``prior`` (default:
    the stationary law of the dynamics). A warning is attached when the
    per-step spike probability exceeds 0.1, since the one-spike-per-step
    approximation then distorts the Poisson statistics.
    """
    rng = _rng(seed)
    if x0 is None:
        x0 = draw_initial_state(dyn, rng, prior)
    traj = integrate_state(dyn, x0, dt, n_steps(T, dt) * dt, rng)
    sp = spikes_for_path(sensor, pop, traj.states, dt, rng)
    warnings = ()
    if sp.max_p > P_WARN:
        warnings = (f"per-step spike probability reached {sp.max_p:.4g} (> {P_WARN}); "
                    "consider a smaller dt",)
    return Observations(traj, sp.to_events(dt), sp.max_p, warnings, sp)
