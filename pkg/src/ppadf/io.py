"""File formats: CSV trajectories and beliefs, JSONL spike trains, run manifests.

Floats are written with 17 significant digits so every file round-trips
exactly and byte-identity comparisons are meaningful.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .adf import BeliefTrajectory
from .errors import ConfigError
from .model import SpikeEvent
from .simulate import Trajectory


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and a float array of the rows (empty cells become NaN)."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) if v != "" else math.nan for v in r] for r in reader if r]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, data


# ---------------------------------------------------------------------------
# trajectories and beliefs
# ---------------------------------------------------------------------------


def _times(dt: float, count: int) -> np.ndarray:
    return np.arange(count) * dt


def write_trajectory(path, traj: Trajectory) -> Path:
    n = traj.states.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)]
    t = _times(traj.dt, traj.states.shape[0])
    return write_csv(path, header, (np.concatenate(([ti], x)) for ti, x in zip(t, traj.states)))


def _grid_dt(t: np.ndarray, path) -> float:
    if t.size < 2:
        raise ConfigError(f"{path}: need at least two grid times")
    dt = float(t[1] - t[0])
    if not np.allclose(t, np.arange(t.size) * dt, rtol=0, atol=1e-9 * max(1.0, t[-1])):
        raise ConfigError(f"{path}: times are not on a uniform grid starting at 0")
    return dt


def read_trajectory(path, dt: float | None = None) -> Trajectory:
    header, data = read_csv(path)
    if not header or header[0] != "t":
        raise ConfigError(f"{path}: expected a 't' column first")
    dt = _grid_dt(data[:, 0], path) if dt is None else dt
    return Trajectory(dt, data[:, 1:])


def belief_header(n: int) -> list[str]:
    mu = [f"mu_{i + 1}" for i in range(n)]
    sig = [f"sigma_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    return ["t"] + mu + sig


def write_beliefs(path, beliefs) -> Path:
    """Mean and row-major covariance at every grid time (ADF or PF runs)."""
    means = np.asarray(beliefs.means)
    covs = np.asarray(beliefs.covs)
    n = means.shape[1]
    t = _times(beliefs.dt, means.shape[0])
    flat = covs.reshape(covs.shape[0], n * n)
    return write_csv(path, belief_header(n), (np.concatenate(([ti], m, c)) for ti, m, c in zip(t, means, flat)))


def read_beliefs(path, dt: float | None = None) -> BeliefTrajectory:
    header, data = read_csv(path)
    k = len(header) - 1
    n = int(round((math.sqrt(4 * k + 1) - 1) / 2))
    if header != belief_header(n):
        raise ConfigError(f"{path}: not a belief CSV")
    dt = _grid_dt(data[:, 0], path) if dt is None else dt
    return BeliefTrajectory(dt, data[:, 1:1 + n], data[:, 1 + n:].reshape(-1, n, n))


# ---------------------------------------------------------------------------
# spike trains
# ---------------------------------------------------------------------------


def write_spikes(path, events: Sequence[SpikeEvent]) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for ev in events:
            fh.write(json.dumps({"t": ev.t, "theta": ev.theta.tolist(), "comp": ev.comp}) + "\n")
    return path


def read_spikes(path) -> list[SpikeEvent]:
    """Parse a JSONL spike file; errors name the offending line."""
    events = []
    last = -math.inf
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ev = SpikeEvent(rec["t"], rec["theta"], rec.get("comp", 0))
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: malformed spike record ({exc})") from None
            if ev.t < last:
                raise ConfigError(f"{path}:{lineno}: spike at t={ev.t!r} is earlier than the previous one")
            last = ev.t
            events.append(ev)
    return events


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, *, command: str, config: dict, seed: int, files: Sequence, warnings=(), extra=None) -> Path:
    """Deterministic JSON manifest listing every output with its SHA-256 digest."""
    from . import __version__

    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "warnings": list(warnings),
        "files": {Path(f).name: sha256(f) for f in files},
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
