"""Compare the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` wall time of each kernel for both backends
and the maximum absolute difference between their outputs.
"""

import argparse
import time

import numpy as np

from ppadf import _fallback, kernels
from ppadf.model import GaussianPop, SensorShape

try:
    from ppadf import _core
except ImportError:  # extension not built
    _core = None


def best_time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def adf_case(B=200, steps=2000, rate=50.0, seed=0):
    rng = np.random.default_rng(seed)
    table = kernels.component_table(SensorShape.scalar(50.0, 1.0), GaussianPop([0.5], [[2.0]]))
    counts = rng.poisson(rate * steps * 1e-3, size=B)
    ev_trial = np.repeat(np.arange(B), counts).astype(np.int64)
    ev_step = np.concatenate([np.sort(rng.integers(1, steps + 1, size=c)) for c in counts]).astype(np.int64)
    ev_theta = rng.normal(size=ev_trial.size)
    ev_comp = np.zeros(ev_trial.size, dtype=np.int64)
    args = (np.zeros(B), np.full(B, 10.0), -0.05, 0.0, 1.0, 1e-3, steps, table,
            ev_trial, ev_step, ev_theta, ev_comp, True, False)
    return args


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _core is None:
        print("compiled extension not available; only the numpy fallback can run")
        return 1

    rng = np.random.default_rng(1)
    w = rng.random(10_000)
    w /= w.sum()
    noise = rng.normal(size=(100_000, 1)) * 0.03
    A, b, x0 = np.array([[-0.1]]), np.zeros(1), np.zeros(1)
    cases = {
        "adf_scalar_batch (200 trials x 2000 steps)": lambda impl: impl.adf_scalar_batch(*adf_case()),
        "systematic_resample (P=10^4)": lambda impl: impl.systematic_resample(w, 0.3e-4),
        "euler_maruyama (10^5 steps)": lambda impl: impl.euler_maruyama(A, b, x0, 1e-3, noise),
    }
    print(f"{'kernel':45s} {'python [s]':>12s} {'compiled [s]':>13s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, run in cases.items():
        tp, outp = best_time(lambda: run(_fallback), args.repeat)
        tc, outc = best_time(lambda: run(_core), args.repeat)
        a = outp[0] if isinstance(outp, tuple) else outp
        c = outc[0] if isinstance(outc, tuple) else outc
        diff = float(np.nanmax(np.abs(np.asarray(a, float) - np.asarray(c, float))))
        print(f"{name:45s} {tp:12.4f} {tc:13.4f} {tp / tc:8.1f} {diff:11.3g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
