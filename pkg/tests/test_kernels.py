"""Compiled kernels against the numpy fallback."""

import os
import subprocess
import sys

import numpy as np
import pytest

from ppadf import _fallback, kernels

core = pytest.importorskip("ppadf._core", reason="compiled extension not built")

TABLE = np.array([
    [2.0, 1.0, 20.0, 4.0, 0.3, 2.0],  # Gaussian population
    [3.0, 0.5, 10.0, 1.0, -1.0, 0.5],  # interval
    [1.0, 1.0, 5.0, 2.0, 0.0, 0.0],  # uniform
    [0.0, 1.0, 3.0, 9.0, 0.7, 0.0],  # single preferred stimulus
])


def batch_args(rng, B=6, steps=400):
    n_ev = 60
    ev_trial = np.sort(rng.integers(0, B, n_ev))
    ev_step = np.concatenate([np.sort(rng.integers(1, steps + 1, np.sum(ev_trial == b))) for b in range(B)])
    return (rng.normal(size=B), rng.uniform(0.2, 2.0, B), -0.3, 0.1, 0.8, 1e-3, steps, TABLE,
            ev_trial, ev_step, rng.normal(size=n_ev), rng.integers(0, len(TABLE), n_ev))


class TestEquivalence:
    @pytest.mark.parametrize("continuous", [True, False])
    def test_adf_batch(self, continuous):
        args = batch_args(np.random.default_rng(0))
        mu_c, var_c, fail_c = core.adf_scalar_batch(*args, continuous, False)
        mu_p, var_p, fail_p = _fallback.adf_scalar_batch(*args, continuous, False)
        np.testing.assert_array_equal(fail_c, fail_p)
        np.testing.assert_allclose(mu_c, mu_p, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(var_c, var_p, rtol=1e-12, atol=1e-13)

    def test_adf_batch_failure_step(self):
        # a coarse step far in the tail of a bright population loses definiteness
        table = np.array([[2.0, 1.0, 1e4, 0.1, 0.0, 1.0]])
        args = (np.array([3.0]), np.array([1.0]), 0.0, 0.0, 0.0, 0.01, 50, table,
                np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64))
        _, _, fail_c = core.adf_scalar_batch(*args, True, False)
        _, _, fail_p = _fallback.adf_scalar_batch(*args, True, False)
        assert fail_c[0] > 0 and fail_c[0] == fail_p[0]
        _, var_j, fail_j = core.adf_scalar_batch(*args, True, True)
        assert fail_j[0] == -1 and np.all(var_j > 0)

    def test_resample(self):
        rng = np.random.default_rng(1)
        for P in (2, 7, 100, 1000):
            w = rng.random(P) ** 4
            w /= w.sum()
            u = rng.random() / P
            np.testing.assert_array_equal(core.systematic_resample(w, u), _fallback.systematic_resample(w, u))

    def test_euler_maruyama(self):
        rng = np.random.default_rng(2)
        A = np.array([[-1.0, 0.5], [0.0, -0.2]])
        noise = rng.normal(size=(500, 2))
        a, bad_a = core.euler_maruyama(A, np.array([0.1, 0.0]), np.array([1.0, -1.0]), 1e-2, noise)
        b, bad_b = _fallback.euler_maruyama(A, np.array([0.1, 0.0]), np.array([1.0, -1.0]), 1e-2, noise)
        assert bad_a == bad_b == -1
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)

    def test_euler_maruyama_overflow(self):
        noise = np.zeros((50, 1))
        a, bad_a = core.euler_maruyama(np.array([[1e300]]), np.zeros(1), np.ones(1), 1.0, noise)
        b, bad_b = _fallback.euler_maruyama(np.array([[1e300]]), np.zeros(1), np.ones(1), 1.0, noise)
        assert bad_a == bad_b > 0
        np.testing.assert_array_equal(a, b)


class TestSelection:
    def test_compiled_by_default(self):
        if os.environ.get("PPADF_PURE_PYTHON") == "1":
            pytest.skip("fallback forced by the environment")
        assert kernels.BACKEND == "compiled"

    def test_environment_forces_fallback(self):
        env = dict(os.environ, PPADF_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", "from ppadf import kernels; print(kernels.BACKEND)"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"
