"""JSON run configuration: parsing, canonical serialization and parameter paths.

Document layout::

    {
      "dynamics":   {"A": [[-0.1]], "b": [0.0], "D": [[1.0]]},
      "sensor":     {"h": 1000.0, "H": [[1.0]], "R": [[4.0]]},
      "population": {"kind": "gaussian", "c": [0.0], "cov": [[4.0]]},
      "sim":        {"dt": 0.001, "T": 1.0, "x0": "steady"},
      "filter":     {"mu0": [0.0], "Sigma0": [[1.0]], "particles": 1000,
                     "resample": "every", "ess_threshold": 0.5, "jitter": false}
    }

Population kinds: ``single`` (``theta``), ``uniform``, ``gaussian``
(``c``, ``cov``), ``interval`` (``a``, ``b``) and ``mixture``
(``components``: list of ``{"weight", "sensor", "population"}``).
Scalar shorthands are accepted on input (``"sigma_r2": 0.25`` for
``R = [[4]]``, ``"sigma_pop2"`` for ``cov``, bare numbers for 1-vectors)
and are written back in canonical matrix form, so
``parse(serialize(parse(doc)))`` equals ``parse(doc)``.

``sim.x0`` is a state vector, ``"steady"`` (stationary law of the
dynamics) or ``"prior"`` (the filter's initial belief). ``filter.mu0`` and
``filter.Sigma0`` may be omitted when ``A`` is Hurwitz; the stationary law
is then used.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, ValidationError
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
    UniformAll,
    check,
    steady_state_prior,
)

TOP_KEYS = ("dynamics", "sensor", "population", "sim", "filter")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    T: float = 1.0
    x0: Any = None  # tuple of floats, "steady", "prior" or None (auto)


@dataclass(frozen=True)
class FilterConfig:
    mu0: tuple | None = None
    Sigma0: tuple | None = None
    particles: int = 1000
    resample: str = "every"
    ess_threshold: float = 0.5
    jitter: bool = False


@dataclass(frozen=True, eq=False)
class RunConfig:
    """A parsed, validated configuration document."""

    dynamics: LinearDynamics
    sensor: SensorShape
    population: Population
    sim: SimConfig
    filter: FilterConfig

    def to_dict(self) -> dict:
        return serialize(self)

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def belief0(self) -> GaussianBelief:
        """Initial filter belief: configured, else the stationary law."""
        if self.filter.mu0 is not None:
            return GaussianBelief(self.filter.mu0, self.filter.Sigma0)
        return steady_state_prior(self.dynamics)

    def x0_mode(self):
        """``"steady"``, ``"prior"`` or a fixed state vector."""
        x0 = self.sim.x0
        if x0 is None:
            return "steady" if self.dynamics.is_hurwitz() else "prior"
        return x0


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _vector(v, where):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return np.array([float(v)])
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a list of numbers") from None
    if a.ndim != 1:
        raise ConfigError(f"{where}: expected a vector")
    return a


def _matrix(v, where):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return np.array([[float(v)]])
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a nested list of numbers") from None
    if a.ndim != 2:
        raise ConfigError(f"{where}: expected a matrix (list of rows)")
    return a


def _take(d: dict, where: str, allowed: set) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    return d


def _parse_dynamics(d):
    d = _take(d, "dynamics", {"A", "b", "D"})
    for k in ("A", "D"):
        if k not in d:
            raise ConfigError(f"dynamics.{k} is required")
    A = _matrix(d["A"], "dynamics.A")
    b = _vector(d.get("b", [0.0] * A.shape[0]), "dynamics.b")
    return LinearDynamics(A, b, _matrix(d["D"], "dynamics.D"))


def _parse_sensor(d, where="sensor"):
    d = _take(d, where, {"h", "H", "R", "sigma_r2"})
    if "h" not in d:
        raise ConfigError(f"{where}.h is required")
    if ("R" in d) == ("sigma_r2" in d):
        raise ConfigError(f"{where}: give exactly one of R or sigma_r2")
    if "R" in d:
        R = _matrix(d["R"], f"{where}.R")
    else:
        s2 = _num(d["sigma_r2"], f"{where}.sigma_r2")
        if not s2 > 0:
            raise ConfigError(f"{where}.sigma_r2 must be positive")
        R = np.array([[1.0 / s2]])
    H = _matrix(d.get("H", [[1.0]]), f"{where}.H")
    return SensorShape(_num(d["h"], f"{where}.h"), H, R)


def _parse_population(d, where="population", allow_mixture=True):
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"{where}: expected an object with a 'kind'")
    kind = d["kind"]
    if kind == "single":
        d = _take(d, where, {"kind", "theta"})
        return Single(_vector(d.get("theta", 0.0), f"{where}.theta"))
    if kind == "uniform":
        _take(d, where, {"kind"})
        return UniformAll()
    if kind == "gaussian":
        d = _take(d, where, {"kind", "c", "cov", "sigma_pop2"})
        if ("cov" in d) == ("sigma_pop2" in d):
            raise ConfigError(f"{where}: give exactly one of cov or sigma_pop2")
        cov = d["cov"] if "cov" in d else d["sigma_pop2"]
        return GaussianPop(_vector(d.get("c", 0.0), f"{where}.c"), _matrix(cov, f"{where}.cov"))
    if kind == "interval":
        d = _take(d, where, {"kind", "a", "b"})
        return IntervalUniform(_num(d.get("a"), f"{where}.a"), _num(d.get("b"), f"{where}.b"))
    if kind == "mixture":
        if not allow_mixture:
            raise ConfigError(f"{where}: nested mixtures are not supported")
        d = _take(d, where, {"kind", "components"})
        comps = []
        for i, c in enumerate(d.get("components", [])):
            w = f"{where}.components[{i}]"
            c = _take(c, w, {"weight", "sensor", "population"})
            comps.append(Component(
                _num(c.get("weight", 1.0), f"{w}.weight"),
                _parse_sensor(c.get("sensor"), f"{w}.sensor"),
                _parse_population(c.get("population"), f"{w}.population", allow_mixture=False),
            ))
        return Mixture(tuple(comps))
    raise ConfigError(f"{where}: unknown population kind {kind!r}")


def _parse_sim(d):
    d = _take(d or {}, "sim", {"dt", "T", "x0"})
    x0 = d.get("x0")
    if isinstance(x0, str):
        if x0 not in ("steady", "prior"):
            raise ConfigError("sim.x0 must be a vector, 'steady' or 'prior'")
    elif x0 is not None:
        x0 = tuple(_vector(x0, "sim.x0").tolist())
    sim = SimConfig(_num(d.get("dt", 1e-3), "sim.dt"), _num(d.get("T", 1.0), "sim.T"), x0)
    if not sim.dt > 0 or not sim.T >= sim.dt:
        raise ConfigError("sim requires dt > 0 and T >= dt")
    return sim


def _parse_filter(d):
    d = _take(d or {}, "filter", {"mu0", "Sigma0", "particles", "resample", "ess_threshold", "jitter"})
    if ("mu0" in d) != ("Sigma0" in d):
        raise ConfigError("filter: give both mu0 and Sigma0, or neither")
    mu0 = Sigma0 = None
    if "mu0" in d:
        mu0 = tuple(_vector(d["mu0"], "filter.mu0").tolist())
        Sigma0 = tuple(tuple(r) for r in _matrix(d["Sigma0"], "filter.Sigma0").tolist())
    particles = d.get("particles", 1000)
    if isinstance(particles, bool) or not isinstance(particles, int) or particles < 2:
        raise ConfigError("filter.particles must be an integer >= 2")
    resample = d.get("resample", "every")
    if resample not in ("every", "ess"):
        raise ConfigError("filter.resample must be 'every' or 'ess'")
    jitter = d.get("jitter", False)
    if not isinstance(jitter, bool):
        raise ConfigError("filter.jitter must be true or false")
    return FilterConfig(mu0, Sigma0, particles, resample,
                        _num(d.get("ess_threshold", 0.5), "filter.ess_threshold"), jitter)


def parse(doc: dict) -> RunConfig:
    """Build a :class:`RunConfig` from a decoded JSON document.

    Raises
    ------
    ConfigError
        Malformed document or a model that fails validation (all
        violations are listed).
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    extra = set(doc) - set(TOP_KEYS)
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    for k in ("dynamics", "sensor", "population"):
        if k not in doc:
            raise ConfigError(f"missing top-level key {k!r}")
    dyn = _parse_dynamics(doc["dynamics"])
    sensor = _parse_sensor(doc["sensor"])
    pop = _parse_population(doc["population"])
    errs = check(dyn, sensor, pop)
    if errs:
        raise ConfigError("invalid model: " + "; ".join(errs))
    cfg = RunConfig(dyn, sensor, pop, _parse_sim(doc.get("sim")), _parse_filter(doc.get("filter")))
    try:
        b0 = cfg.belief0()
    except ValidationError as exc:
        raise ConfigError("filter prior: " + "; ".join(exc.errors)) from None
    if b0.n != dyn.n:
        raise ConfigError(f"filter prior has dimension {b0.n}, state has {dyn.n}")
    x0 = cfg.sim.x0
    if isinstance(x0, tuple) and len(x0) != dyn.n:
        raise ConfigError(f"sim.x0 has size {len(x0)}, state has {dyn.n}")
    if x0 == "steady" and not dyn.is_hurwitz():
        raise ConfigError("sim.x0 = 'steady' requires a Hurwitz drift matrix")
    return cfg


def load(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse(doc)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _sensor_dict(s: SensorShape) -> dict:
    return {"h": s.h, "H": s.H.tolist(), "R": s.R.tolist()}


def _pop_dict(p) -> dict:
    if isinstance(p, Single):
        return {"kind": "single", "theta": p.theta.tolist()}
    if isinstance(p, UniformAll):
        return {"kind": "uniform"}
    if isinstance(p, GaussianPop):
        return {"kind": "gaussian", "c": p.c.tolist(), "cov": p.cov.tolist()}
    if isinstance(p, IntervalUniform):
        return {"kind": "interval", "a": p.a, "b": p.b}
    if isinstance(p, Mixture):
        return {"kind": "mixture", "components": [
            {"weight": c.weight, "sensor": _sensor_dict(c.sensor), "population": _pop_dict(c.population)}
            for c in p.components
        ]}
    raise TypeError(type(p).__name__)


def serialize(cfg: RunConfig) -> dict:
    """Canonical JSON-ready dictionary of ``cfg``."""
    sim = {"dt": cfg.sim.dt, "T": cfg.sim.T}
    if cfg.sim.x0 is not None:
        sim["x0"] = cfg.sim.x0 if isinstance(cfg.sim.x0, str) else list(cfg.sim.x0)
    filt = {
        "particles": cfg.filter.particles,
        "resample": cfg.filter.resample,
        "ess_threshold": cfg.filter.ess_threshold,
        "jitter": cfg.filter.jitter,
    }
    if cfg.filter.mu0 is not None:
        filt["mu0"] = list(cfg.filter.mu0)
        filt["Sigma0"] = [list(r) for r in cfg.filter.Sigma0]
    return {
        "dynamics": {"A": cfg.dynamics.A.tolist(), "b": cfg.dynamics.b.tolist(), "D": cfg.dynamics.D.tolist()},
        "sensor": _sensor_dict(cfg.sensor),
        "population": _pop_dict(cfg.population),
        "sim": sim,
        "filter": filt,
    }


def dumps(cfg: RunConfig) -> str:
    return json.dumps(serialize(cfg), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# parameter paths (sweep axes)
# ---------------------------------------------------------------------------

# scalar shorthands -> (dotted path, value transform)
ALIASES = {
    "c": ("population.c", lambda v: [v]),
    "sigma_pop2": ("population.cov", lambda v: [[v]]),
    "h": ("sensor.h", lambda v: v),
    "sigma_r2": ("sensor.R", lambda v: [[1.0 / v]]),
    "a": ("dynamics.A", lambda v: [[v]]),
    "d": ("dynamics.D", lambda v: [[v]]),
    "b": ("dynamics.b", lambda v: [v]),
    "dt": ("sim.dt", lambda v: v),
    "T": ("sim.T", lambda v: v),
}


def with_param(doc: dict, name: str, value) -> dict:
    """Copy of ``doc`` with one parameter replaced.

    ``name`` is a shorthand from :data:`ALIASES` or a dotted path such as
    ``population.cov``; a path into a list uses integer segments
    (``population.components.0.weight``).
    """
    path, fn = ALIASES.get(name, (name, lambda v: v))
    out = copy.deepcopy(doc)
    keys = path.split(".")
    node = out
    for k in keys[:-1]:
        if isinstance(node, list):
            node = node[int(k)]
        else:
            if k not in node:
                raise ConfigError(f"parameter path {path!r} does not exist")
            node = node[k]
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = fn(value)
    else:
        if last not in node and path not in {p for p, _ in ALIASES.values()}:
            raise ConfigError(f"parameter path {path!r} does not exist")
        node[last] = fn(value)
        if path == "sensor.R":
            node.pop("sigma_r2", None)
        if path == "population.cov":
            node.pop("sigma_pop2", None)
    return out
