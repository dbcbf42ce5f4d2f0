"""Monte-Carlo experiment harness.

* :func:`run_cell` / :func:`run_sweep` -- encoding sweeps over population
  parameters, scored by the window-averaged posterior standard deviation
  relative to the prior standard deviation.
* :func:`compare_uniform` -- the full filter against the uniform-coding
  filter (continuous terms zeroed) on identical spike trains.
* :func:`compare_pf` -- ADF against the particle filter.
* :func:`variance_curve` -- trial-averaged posterior variance over time.

Seeding
-------
Every random draw comes from a generator keyed by
``(base_seed, stream tag, cell index, trial index)`` through
:class:`numpy.random.SeedSequence`, so results do not depend on the order
or the process in which trials run. Simulation uses the ``"simulate"``
stream and the particle filter the ``"pf"`` stream.

Step-size checks
----------------
``refine=r`` simulates on a grid ``r`` times finer than the filter grid
and moves each spike to the filter step containing it (right endpoint).
Running the same seed with ``(dt, refine=2)`` and ``(dt / 2, refine=1)``
therefore filters the same realizations at two step sizes.
"""

from __future__ import annotations

import itertools
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .adf import filter_run
from .config import RunConfig, parse, with_param
from .errors import ConfigError, NumericalError, SPDError, WeightUnderflowError
from .metrics import ErrorStats, comparison_records, error_stats
from .model import GaussianBelief, GaussianPop, steady_state_prior
from .simulate import Observations, SpikeArrays, generate_observations, n_steps

STREAM_TAGS = ("simulate", "filter", "pf", "sweep")


def stream(base_seed: int, tag: str, cell: int = 0, trial: int = 0) -> np.random.Generator:
    """Independent generator for one (stream tag, cell, trial) triple."""
    if tag not in STREAM_TAGS:
        raise ValueError(f"unknown stream tag {tag!r}")
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(zlib.crc32(tag.encode()), int(cell), int(trial)))
    return np.random.Generator(np.random.PCG64(ss))


def _mean_se(values: np.ndarray) -> tuple[float, float | None]:
    if values.size == 0:
        return math.nan, None
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, None
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


# ---------------------------------------------------------------------------
# trial simulation and batched filtering
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrialData:
    """One simulated trial on the filter grid."""

    states: np.ndarray  # (steps + 1, n)
    spikes: SpikeArrays
    max_p: float


def coarsen(states: np.ndarray, spikes: SpikeArrays, factor: int) -> TrialData:
    """Map a trial simulated at ``dt / factor`` onto the grid of step ``dt``."""
    if factor == 1:
        return TrialData(states, spikes, spikes.max_p)
    steps = (spikes.steps + factor - 1) // factor
    return TrialData(states[::factor], SpikeArrays(steps, spikes.thetas, spikes.comps, spikes.max_p), spikes.max_p)


def simulate_observations(cfg: RunConfig, prior: GaussianBelief, dt: float, T: float, rng) -> Observations:
    """Draw ``x0`` as configured (``"prior"`` means ``prior``) and simulate one trial."""
    mode = cfg.x0_mode()
    if isinstance(mode, tuple):
        x0, x_prior = np.array(mode), None
    else:
        x0 = None
        x_prior = steady_state_prior(cfg.dynamics) if mode == "steady" else prior
    return generate_observations(cfg.dynamics, cfg.sensor, cfg.population, dt, T, rng, x0=x0, prior=x_prior)


def simulate_trial(cfg: RunConfig, prior: GaussianBelief, dt: float, T: float, rng, refine: int = 1) -> TrialData:
    """Simulate at ``dt / refine`` and map the trial onto the grid of step ``dt``."""
    obs = simulate_observations(cfg, prior, dt / refine, n_steps(T, dt) * dt, rng)
    return coarsen(obs.trajectory.states, obs.spikes, refine)


def batch_filter(cfg: RunConfig, prior: GaussianBelief, dt: float, steps: int, trials: Sequence[TrialData],
                 *, continuous: bool = True, jitter: bool | None = None, population=None):
    """Scalar ADF over many trials at once; returns :class:`kernels.BatchResult`."""
    pop = cfg.population if population is None else population
    jitter = cfg.filter.jitter if jitter is None else jitter
    B = len(trials)
    empty_i, empty_f = [np.zeros(0, np.int64)], [np.zeros(0)]
    ev_trial = np.concatenate([np.full(t.spikes.steps.size, i, dtype=np.int64) for i, t in enumerate(trials)] + empty_i)
    ev_step = np.concatenate([t.spikes.steps.astype(np.int64) for t in trials] + empty_i)
    ev_theta = np.concatenate([t.spikes.thetas[:, 0] for t in trials] + empty_f)
    ev_comp = np.concatenate([t.spikes.comps.astype(np.int64) for t in trials] + empty_i)
    return kernels.adf_scalar_batch(
        np.full(B, prior.mean[0]), np.full(B, prior.cov[0, 0]),
        float(cfg.dynamics.A[0, 0]), float(cfg.dynamics.b[0]),
        float((cfg.dynamics.D @ cfg.dynamics.D.T)[0, 0]),
        dt, steps, kernels.component_table(cfg.sensor, pop),
        ev_trial, ev_step, ev_theta, ev_comp, continuous=continuous, jitter=jitter,
    )


def _filter_each(cfg, prior, dt, steps, trials, *, continuous=True, population=None):
    """General-dimension fallback: ``(means, covs, fail_step)`` per trial."""
    pop = cfg.population if population is None else population
    out = []
    for t in trials:
        events = t.spikes.to_events(dt)
        try:
            traj = filter_run(events, cfg.dynamics, cfg.sensor, pop, prior, dt, steps * dt,
                              continuous=continuous, jitter=cfg.filter.jitter)
            out.append((traj.means, traj.covs, -1))
        except SPDError as exc:
            out.append((None, None, exc.step))
    return out


def _window_steps(window, dt, steps) -> tuple[int, int]:
    t0, t1 = float(window[0]), float(window[1])
    k0, k1 = int(round(t0 / dt)), int(round(t1 / dt))
    if not t1 > t0 or k0 < 0 or k1 > steps:
        raise ConfigError(f"window [{t0}, {t1}] must satisfy 0 <= t0 < t1 <= T")
    return k0, k1


# ---------------------------------------------------------------------------
# encoding sweeps
# ---------------------------------------------------------------------------


def cell_prior(cfg: RunConfig) -> GaussianBelief:
    """Correct prior for sweep trials: stationary law when ``A`` is Hurwitz."""
    if cfg.dynamics.is_hurwitz():
        return steady_state_prior(cfg.dynamics)
    return cfg.belief0()


@dataclass(frozen=True)
class CellResult:
    """Aggregate criterion of one sweep cell.

    ``se`` is ``None`` when fewer than two trials survive. ``n_trials``
    counts surviving trials; divergent (SPD-failure) trials are excluded
    from the mean and counted in ``n_divergent``. ``exceeds_prior`` flags a
    mean relative posterior sd above 1.
    """

    mean: float
    se: float | None
    n_trials: int
    n_divergent: int
    exceeds_prior: bool
    values: tuple = field(default=(), repr=False, compare=False)


def run_cell(cfg: RunConfig, trials: int, window, seed: int, cell: int = 0, *,
             refine: int = 1, criterion: str = "sd") -> CellResult:
    """Monte-Carlo criterion for one parameter setting.

    Each trial draws ``x0`` from the prior, simulates a spike train and runs
    the ADF from the same prior. ``criterion="sd"`` scores the posterior sd
    averaged over ``window`` (grid points inclusive) divided by the prior
    sd; ``"mse"`` scores the squared error integrated over ``window``.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    if criterion not in ("sd", "mse"):
        raise ConfigError("criterion must be 'sd' or 'mse'")
    dt, T = cfg.sim.dt, cfg.sim.T
    steps = n_steps(T, dt)
    k0, k1 = _window_steps(window, dt, steps)
    prior = cell_prior(cfg)
    sd_p = math.sqrt(np.trace(prior.cov))
    data = [simulate_trial(cfg, prior, dt, T, stream(seed, "simulate", cell, i), refine) for i in range(trials)]
    if kernels.scalar_supported(cfg.dynamics, cfg.sensor, cfg.population):
        res = batch_filter(cfg, prior, dt, steps, data)
        runs = [(res.mu[i][:, None], res.var[i][:, None, None], int(res.fail_step[i])) for i in range(trials)]
    else:
        runs = _filter_each(cfg, prior, dt, steps, data)
    values = []
    n_div = 0
    for td, (means, covs, fail) in zip(data, runs):
        if fail >= 0:
            n_div += 1
            continue
        if criterion == "sd":
            sd = np.sqrt(np.trace(covs[k0:k1 + 1], axis1=1, axis2=2))
            values.append(float(np.mean(sd / sd_p)))
        else:
            err = td.states[k0:k1] - means[k0:k1]
            values.append(float(dt * np.sum(err * err)))
    values = np.array(values)
    mean, se = _mean_se(values)
    exceeds = bool(criterion == "sd" and values.size and mean > 1.0)
    return CellResult(mean, se, int(values.size), n_div, exceeds, tuple(values.tolist()))


def parse_grid(text: str) -> tuple[tuple[str, tuple[float, ...]], ...]:
    """Parse ``"c=0,0.5;sigma_pop2=0.1,1"`` into ordered axes."""
    axes = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        if "=" not in part:
            raise ConfigError(f"grid axis {part!r} must look like name=v1,v2,...")
        name, vals = part.split("=", 1)
        try:
            values = tuple(float(v) for v in vals.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"grid axis {name!r} has a non-numeric value") from None
        if not values:
            raise ConfigError(f"grid axis {name!r} has no values")
        axes.append((name.strip(), values))
    if not axes:
        raise ConfigError("grid is empty")
    return tuple(axes)


def parse_window(text: str) -> tuple[float, float]:
    try:
        t0, t1 = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"window {text!r} must look like T0:T1") from None
    if not t1 > t0:
        raise ConfigError("window needs T1 > T0")
    return t0, t1


@dataclass(frozen=True)
class SweepSpec:
    """Base configuration document, grid axes, trials per cell, window and seed."""

    base: dict
    axes: tuple
    trials: int
    window: tuple
    seed: int = 0
    refine: int = 1
    criterion: str = "sd"

    def __post_init__(self):
        if not self.axes or any(len(v) == 0 for _, v in self.axes):
            raise ConfigError("grid must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.window[1] > self.window[0]:
            raise ConfigError("window needs t1 > t0")
        if self.refine < 1:
            raise ConfigError("refine must be a positive integer")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.axes)

    def cells(self) -> list[tuple[float, ...]]:
        """Cartesian product of the axes, last axis fastest."""
        return list(itertools.product(*(v for _, v in self.axes)))

    def cell_config(self, values) -> RunConfig:
        doc = self.base
        for name, v in zip(self.names, values):
            doc = with_param(doc, name, v)
        return parse(doc)


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    cells: tuple  # of (values tuple, CellResult)

    def best(self) -> tuple[tuple[float, ...], CellResult]:
        """Cell with the lowest mean criterion (ties: first in grid order)."""
        ok = [(v, r) for v, r in self.cells if r.n_trials > 0]
        return min(ok, key=lambda vr: vr[1].mean)

    def column(self) -> str:
        return "mean_rel_sd" if self.spec.criterion == "sd" else "mean_mse"

    def header(self) -> list[str]:
        return list(self.spec.names) + [self.column(), "se", "n_trials", "n_divergent", "exceeds_prior"]

    def rows(self) -> list[list]:
        return [list(v) + [r.mean, r.se, r.n_trials, r.n_divergent, r.exceeds_prior] for v, r in self.cells]


def _cell_job(args):
    spec, index, values = args
    cfg = spec.cell_config(values)
    return run_cell(cfg, spec.trials, spec.window, spec.seed, index, refine=spec.refine, criterion=spec.criterion)


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("PPADF_JOBS", "1")))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec, jobs: int | None = None) -> SweepResult:
    """Evaluate every cell; output is identical for any ``jobs``."""
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    cells = spec.cells()
    for values in cells:  # fail fast on an invalid cell before spawning workers
        spec.cell_config(values)
    args = [(spec, i, v) for i, v in enumerate(cells)]
    if jobs == 1 or len(cells) == 1:
        results = [_cell_job(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
            results = list(pool.map(_cell_job, args))
    return SweepResult(spec, tuple(zip(cells, results)))


# ---------------------------------------------------------------------------
# ADF versus uniform-coding filter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformComparison:
    """Windowed MSE of the full filter and the uniform-coding filter.

    ``rel_diff = (mse_uniform - mse_adf) / mse_uniform``; ``pooled_se`` is
    ``sqrt(se_adf**2 + se_uniform**2)``; ``se_diff`` is the paired standard
    error of the per-trial difference.
    """

    sigma_pop2: float
    mse_adf: float
    mse_uniform: float
    se_adf: float | None
    se_uniform: float | None
    pooled_se: float | None
    se_diff: float | None
    rel_diff: float
    n_trials: int
    n_divergent: int
    per_trial: tuple = field(default=(), repr=False, compare=False)


def compare_uniform(cfg: RunConfig, trials: int, window, seed: int, *, sigma_pop2: float | None = None,
                    cell: int = 0, refine: int = 1, streams: Sequence[TrialData] | None = None) -> UniformComparison:
    """Filter each simulated spike train twice: full ADF and uniform coding.

    ``streams`` injects pre-recorded trials instead of simulating (their
    count overrides ``trials``). Trials where either filter fails are
    excluded and counted.
    """
    pop = cfg.population
    if not isinstance(pop, GaussianPop):
        raise ConfigError("compare-uniform needs a Gaussian population")
    if sigma_pop2 is not None:
        if pop.cov.shape != (1, 1):
            raise ConfigError("sigma_pop2 override needs a scalar sensory space")
        cfg = replace(cfg, population=GaussianPop(pop.c, [[sigma_pop2]]))
    dt, T = cfg.sim.dt, cfg.sim.T
    steps = n_steps(T, dt)
    k0, k1 = _window_steps(window, dt, steps)
    prior = cfg.belief0()
    if streams is None:
        data = [simulate_trial(cfg, prior, dt, T, stream(seed, "simulate", cell, i), refine) for i in range(trials)]
    else:
        data = list(streams)
    scalar = kernels.scalar_supported(cfg.dynamics, cfg.sensor, cfg.population)
    out = {}
    for label, cont in (("adf", True), ("uniform", False)):
        if scalar:
            res = batch_filter(cfg, prior, dt, steps, data, continuous=cont)
            out[label] = [(res.mu[i][:, None], int(res.fail_step[i])) for i in range(len(data))]
        else:
            out[label] = [(m, f) for m, _, f in _filter_each(cfg, prior, dt, steps, data, continuous=cont)]
    pairs = []
    n_div = 0
    for td, (ma, fa), (mu, fu) in zip(data, out["adf"], out["uniform"]):
        if fa >= 0 or fu >= 0:
            n_div += 1
            continue
        ea = td.states[k0:k1] - ma[k0:k1]
        eu = td.states[k0:k1] - mu[k0:k1]
        pairs.append((dt * float(np.sum(ea * ea)), dt * float(np.sum(eu * eu))))
    arr = np.array(pairs).reshape(-1, 2)
    ma_, sa = _mean_se(arr[:, 0])
    mu_, su = _mean_se(arr[:, 1])
    _, sd_ = _mean_se(arr[:, 1] - arr[:, 0])
    pooled = math.sqrt(sa**2 + su**2) if sa is not None and su is not None else None
    rel = (mu_ - ma_) / mu_ if arr.size else math.nan
    return UniformComparison(float(cfg.population.cov[0, 0]), ma_, mu_, sa, su, pooled, sd_, rel,
                             int(arr.shape[0]), n_div, tuple(map(tuple, arr.tolist())))


# ---------------------------------------------------------------------------
# static-state variance curve
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VarianceCurve:
    dt: float
    mean: np.ndarray  # trial average of the posterior variance at every grid time
    se: np.ndarray
    n_trials: int
    n_divergent: int


def variance_curve(cfg: RunConfig, trials: int, seed: int, *, refine: int = 1, cell: int = 0) -> VarianceCurve:
    """Trial-averaged scalar posterior variance with Monte-Carlo standard errors."""
    if not kernels.scalar_supported(cfg.dynamics, cfg.sensor, cfg.population):
        raise ConfigError("variance_curve needs a scalar model with H = 1")
    dt, T = cfg.sim.dt, cfg.sim.T
    steps = n_steps(T, dt)
    prior = cfg.belief0()
    data = [simulate_trial(cfg, prior, dt, T, stream(seed, "simulate", cell, i), refine) for i in range(trials)]
    res = batch_filter(cfg, prior, dt, steps, data)
    ok = res.fail_step < 0
    var = res.var[ok]
    se = var.std(axis=0, ddof=1) / math.sqrt(var.shape[0]) if var.shape[0] > 1 else np.full(steps + 1, np.nan)
    return VarianceCurve(dt, var.mean(axis=0), se, int(ok.sum()), int((~ok).sum()))


# ---------------------------------------------------------------------------
# ADF versus particle filter
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PFComparison:
    records: list
    stats: ErrorStats | None
    n_trials: int
    excluded: tuple  # (trial index, reason)
    trial_of_record: np.ndarray


def compare_pf(cfg: RunConfig, trials: int, seed: int, *, P: int | None = None, T: float | None = None,
               dt: float | None = None, cell: int = 0) -> PFComparison:
    """ADF and particle filter on the same spike train, pooled over trials.

    A record is kept for every grid step ``k >= 1`` of every trial; trials
    where the PF weights underflow or the ADF loses positive definiteness
    are excluded and listed with the reason.
    """
    from .pf import pf_run

    if cfg.dynamics.n != 1:
        raise ConfigError("compare_pf needs a scalar state")
    dt = cfg.sim.dt if dt is None else dt
    T = cfg.sim.T if T is None else T
    P = cfg.filter.particles if P is None else P
    prior = cfg.belief0()
    steps = n_steps(T, dt)
    records, owner, excluded = [], [], []
    for i in range(trials):
        td = simulate_trial(cfg, prior, dt, T, stream(seed, "simulate", cell, i))
        events = td.spikes.to_events(dt)
        try:
            adf = filter_run(events, cfg.dynamics, cfg.sensor, cfg.population, prior, dt, steps * dt,
                             jitter=cfg.filter.jitter)
            pfr = pf_run(events, cfg.dynamics, cfg.sensor, cfg.population, prior, dt, steps * dt, P,
                         stream(seed, "pf", cell, i), resample=cfg.filter.resample,
                         ess_threshold=cfg.filter.ess_threshold)
        except WeightUnderflowError as exc:
            excluded.append((i, f"particle weights underflowed at step {exc.step}"))
            continue
        except NumericalError as exc:
            excluded.append((i, str(exc)))
            continue
        recs = comparison_records(adf, pfr)
        records.extend(recs)
        owner.extend([i] * len(recs))
    stats = error_stats(records) if records else None
    return PFComparison(records, stats, trials - len(excluded), tuple(excluded), np.array(owner, dtype=np.int64))
