"""Model description: linear diffusion state, Gaussian sensors, populations.

A model is three immutable records:

* :class:`LinearDynamics` -- ``dX = (A X + b) dt + D dW``
* :class:`SensorShape` -- tuning curve ``h * exp(-0.5 * ||H x - theta||_R^2)``
* a population density over preferred stimuli ``theta``: :class:`Single`,
  :class:`UniformAll`, :class:`GaussianPop`, :class:`IntervalUniform` or a
  :class:`Mixture` of those.

Mixture components carry their own sensor (height and precision) but must
share the observation matrix ``H`` of the top-level sensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import linalg

from .errors import ValidationError

SPD_RTOL = 1e-12


def _vec(x) -> np.ndarray:
    a = np.array(x, dtype=float)
    return a.reshape(-1)


def _mat(x) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    return a


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def is_spd(M: np.ndarray, rtol: float = SPD_RTOL) -> bool:
    """True if ``M`` is symmetric with all eigenvalues above ``rtol * trace``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.all(np.isfinite(M)):
        return False
    scale = max(abs(np.trace(M)), np.finfo(float).tiny)
    if np.max(np.abs(M - M.T), initial=0.0) > rtol * scale:
        return False
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    return bool(w[0] > rtol * scale)


def is_psd(M: np.ndarray, rtol: float = SPD_RTOL) -> bool:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.all(np.isfinite(M)):
        return False
    scale = max(abs(np.trace(M)), np.finfo(float).tiny)
    if np.max(np.abs(M - M.T), initial=0.0) > rtol * scale:
        return False
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    return bool(w[0] >= -rtol * scale)


@dataclass(frozen=True, eq=False)
class LinearDynamics:
    """Affine drift ``A x + b`` with constant diffusion ``D`` (n x q)."""

    A: np.ndarray
    b: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _freeze(_mat(self.A)))
        object.__setattr__(self, "b", _freeze(_vec(self.b)))
        object.__setattr__(self, "D", _freeze(_mat(self.D)))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def q(self) -> int:
        return self.D.shape[1]

    def is_hurwitz(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.A).real < 0))

    @classmethod
    def scalar(cls, a: float, d: float, b: float = 0.0) -> LinearDynamics:
        return cls([[a]], [b], [[d]])


@dataclass(frozen=True, eq=False)
class SensorShape:
    """Gaussian tuning curve: peak rate ``h``, map ``H`` (m x n), precision ``R``."""

    h: float
    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "H", _freeze(_mat(self.H)))
        object.__setattr__(self, "R", _freeze(_mat(self.R)))

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @classmethod
    def scalar(cls, h: float, sigma_r2: float) -> SensorShape:
        """1-d sensor with ``H = 1`` and tuning variance ``sigma_r2``."""
        return cls(h, [[1.0]], [[1.0 / sigma_r2]])

    def rate(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Tuning curve evaluated at states ``x`` (..., n) and marks (..., m)."""
        v = np.asarray(x, dtype=float) @ self.H.T - np.asarray(theta, dtype=float)
        return self.h * np.exp(-0.5 * np.einsum("...i,ij,...j->...", v, self.R, v))


@dataclass(frozen=True, eq=False)
class Single:
    """One sensor with preferred stimulus ``theta``."""

    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _freeze(_vec(self.theta)))


@dataclass(frozen=True)
class UniformAll:
    """Preferred stimuli cover the sensory space uniformly (Lebesgue measure)."""


@dataclass(frozen=True, eq=False)
class GaussianPop:
    """Normalized Gaussian density of preferred stimuli, ``N(c, cov)``."""

    c: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", _freeze(_vec(self.c)))
        object.__setattr__(self, "cov", _freeze(_mat(self.cov)))


@dataclass(frozen=True)
class IntervalUniform:
    """Unnormalized uniform density on ``[a, b]`` (scalar sensory space only)."""

    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))


BasePopulation = Union[Single, UniformAll, GaussianPop, IntervalUniform]


@dataclass(frozen=True, eq=False)
class Component:
    weight: float
    sensor: SensorShape
    population: BasePopulation

    def __post_init__(self):
        object.__setattr__(self, "weight", float(self.weight))


@dataclass(frozen=True, eq=False)
class Mixture:
    components: tuple[Component, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))


Population = Union[BasePopulation, Mixture]


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Gaussian posterior approximation ``N(mean, cov)``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _vec(self.mean)
        cov = _mat(self.cov)
        if cov.shape != (mean.size, mean.size):
            raise ValidationError([f"covariance shape {cov.shape} does not match mean size {mean.size}"])
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ValidationError(["belief has non-finite entries"])
        scale = max(abs(np.trace(cov)), np.finfo(float).tiny)
        if np.max(np.abs(cov - cov.T)) > SPD_RTOL * scale:
            raise ValidationError(["covariance is not symmetric"])
        if np.linalg.eigvalsh(cov)[0] <= 0:
            raise ValidationError(["covariance is not positive definite"])
        object.__setattr__(self, "mean", _freeze(mean))
        object.__setattr__(self, "cov", _freeze(cov))

    @property
    def n(self) -> int:
        return self.mean.size

    @classmethod
    def scalar(cls, mu: float, var: float) -> GaussianBelief:
        return cls([mu], [[var]])


@dataclass(frozen=True, eq=False)
class SpikeEvent:
    """A spike at time ``t`` with mark ``theta`` from mixture component ``comp``."""

    t: float
    theta: np.ndarray
    comp: int = 0

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "theta", _freeze(_vec(self.theta)))
        object.__setattr__(self, "comp", int(self.comp))

    def __eq__(self, other):
        if not isinstance(other, SpikeEvent):
            return NotImplemented
        return (
            self.t == other.t
            and self.comp == other.comp
            and np.array_equal(self.theta, other.theta)
        )

    def __repr__(self):
        return f"SpikeEvent(t={self.t!r}, theta={self.theta.tolist()!r}, comp={self.comp})"


def components(sensor: SensorShape, pop: Population) -> tuple[Component, ...]:
    """Flatten a population into weighted ``(sensor, base population)`` components.

    A plain population is a single component with weight 1 and the given sensor.
    """
    if isinstance(pop, Mixture):
        return pop.components
    return (Component(1.0, sensor, pop),)


def _check_sensor(sensor: SensorShape, n: int, label: str) -> list[str]:
    errs = []
    m = sensor.m
    if sensor.H.ndim != 2:
        return [f"{label}: H must be a matrix"]
    if sensor.n != n:
        errs.append(f"{label}: H has {sensor.n} columns but the state has dimension {n}")
    if m > n:
        errs.append(f"{label}: sensory dimension m={m} exceeds state dimension n={n}")
    elif np.linalg.matrix_rank(sensor.H) < m:
        errs.append(f"{label}: H does not have full row rank")
    if sensor.R.shape != (m, m):
        errs.append(f"{label}: R has shape {sensor.R.shape}, expected {(m, m)}")
    elif not is_psd(sensor.R):
        errs.append(f"{label}: R is not symmetric positive semidefinite")
    if not np.isfinite(sensor.h) or sensor.h < 0:
        errs.append(f"{label}: h must be a finite non-negative rate")
    return errs


def _check_base(pop, sensor: SensorShape, label: str) -> list[str]:
    m = sensor.m
    errs = []
    r_pd = sensor.R.shape == (m, m) and is_spd(sensor.R)
    if isinstance(pop, Single):
        if pop.theta.size != m:
            errs.append(f"{label}: theta has size {pop.theta.size}, expected {m}")
    elif isinstance(pop, UniformAll):
        if not r_pd:
            errs.append(f"{label}: uniform population requires positive definite R")
    elif isinstance(pop, GaussianPop):
        if pop.c.size != m:
            errs.append(f"{label}: c has size {pop.c.size}, expected {m}")
        if pop.cov.shape != (m, m):
            errs.append(f"{label}: population covariance has shape {pop.cov.shape}, expected {(m, m)}")
        elif not is_psd(pop.cov):
            errs.append(f"{label}: population covariance is not symmetric positive semidefinite")
    elif isinstance(pop, IntervalUniform):
        if m != 1:
            errs.append(f"{label}: interval requires scalar sensory space")
        if not pop.a < pop.b:
            errs.append(f"{label}: interval requires a < b")
        if not r_pd:
            errs.append(f"{label}: interval population requires positive definite R")
    elif isinstance(pop, Mixture):
        errs.append(f"{label}: nested mixtures are not supported")
    else:
        errs.append(f"{label}: unknown population type {type(pop).__name__}")
    return errs


def check(dynamics: LinearDynamics, sensor: SensorShape, pop: Population) -> list[str]:
    """Return every invariant violation of the model (empty list if valid)."""
    errs = []
    n = dynamics.A.shape[0]
    if dynamics.A.ndim != 2 or dynamics.A.shape[0] != dynamics.A.shape[1]:
        errs.append(f"A must be square, got shape {dynamics.A.shape}")
    if dynamics.b.size != n:
        errs.append(f"b has size {dynamics.b.size}, expected {n}")
    if dynamics.D.ndim != 2 or dynamics.D.shape[0] != n:
        errs.append(f"D must have {n} rows, got shape {dynamics.D.shape}")
    for name, arr in (("A", dynamics.A), ("b", dynamics.b), ("D", dynamics.D)):
        if not np.all(np.isfinite(arr)):
            errs.append(f"{name} has non-finite entries")
    errs += _check_sensor(sensor, n, "sensor")
    if isinstance(pop, Mixture):
        if not pop.components:
            errs.append("mixture has no components")
        for i, comp in enumerate(pop.components):
            label = f"mixture component {i}"
            if not comp.weight > 0:
                errs.append(f"{label}: weight must be positive")
            errs += _check_sensor(comp.sensor, n, label)
            if comp.sensor.H.shape != sensor.H.shape or not np.array_equal(comp.sensor.H, sensor.H):
                errs.append(f"{label}: mixture components must share the observation matrix H")
            errs += _check_base(comp.population, comp.sensor, label)
    else:
        errs += _check_base(pop, sensor, "population")
    return errs


def validate(dynamics: LinearDynamics, sensor: SensorShape, pop: Population):
    """Return ``(dynamics, sensor, pop)`` unchanged, or raise :class:`ValidationError`.

    The exception lists every violation found.
    """
    errs = check(dynamics, sensor, pop)
    if errs:
        raise ValidationError(errs)
    return dynamics, sensor, pop


def steady_state_prior(dynamics: LinearDynamics) -> GaussianBelief:
    """Stationary law of the linear SDE.

    Mean ``-A^{-1} b``; covariance solves ``A S + S A^T + D D^T = 0``.
    Requires ``A`` Hurwitz.
    """
    if not dynamics.is_hurwitz():
        raise ValidationError(["steady state requires a Hurwitz drift matrix A"])
    A = dynamics.A
    Q = dynamics.D @ dynamics.D.T
    cov = linalg.solve_continuous_lyapunov(A, -Q)
    cov = 0.5 * (cov + cov.T)
    mean = -np.linalg.solve(A, dynamics.b)
    if not is_spd(cov):
        raise ValidationError(["diffusion does not excite every state; stationary covariance is singular"])
    return GaussianBelief(mean, cov)
