"""Property-based checks over randomly drawn models."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ppadf.adf import expected_rate, spike_update
from ppadf.metrics import ks_statistic
from ppadf.model import GaussianBelief, SensorShape
from ppadf.pf import ParticleEnsemble, systematic_resample

finite = dict(allow_nan=False, allow_infinity=False)


@st.composite
def spd(draw, n):
    vals = draw(st.lists(st.floats(0.05, 5.0, **finite), min_size=n, max_size=n))
    seed = draw(st.integers(0, 2**32 - 1))
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(n, n)))
    return (q * vals) @ q.T


@st.composite
def scalar_case(draw):
    mean = draw(st.floats(-5, 5, **finite))
    var = draw(st.floats(1e-3, 10, **finite))
    h = draw(st.floats(0.1, 100, **finite))
    s2 = draw(st.floats(1e-2, 10, **finite))
    theta = draw(st.floats(-5, 5, **finite))
    return GaussianBelief.scalar(mean, var), SensorShape.scalar(h, s2), theta


@st.composite
def planar_case(draw):
    cov = draw(spd(2))
    R = draw(spd(2))
    mean = np.array(draw(st.lists(st.floats(-3, 3, **finite), min_size=2, max_size=2)))
    theta = np.array(draw(st.lists(st.floats(-3, 3, **finite), min_size=2, max_size=2)))
    return GaussianBelief(mean, cov), SensorShape(1.0, np.eye(2), R), theta


class TestSpikeUpdate:
    @settings(max_examples=200, deadline=None)
    @given(scalar_case())
    def test_contracts_and_moves_toward_stimulus(self, case):
        belief, sensor, theta = case
        post = spike_update(belief, sensor, [theta])
        assert 0 < post.cov[0, 0] <= belief.cov[0, 0]
        lo, hi = sorted((belief.mean[0], theta))
        assert lo - 1e-12 <= post.mean[0] <= hi + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(planar_case())
    def test_precision_adds(self, case):
        belief, sensor, theta = case
        post = spike_update(belief, sensor, theta)
        np.testing.assert_allclose(np.linalg.inv(post.cov), np.linalg.inv(belief.cov) + sensor.R, rtol=1e-9,
                                   atol=1e-9)
        # the covariance shrinks in every direction
        assert np.all(np.linalg.eigvalsh(belief.cov - post.cov) >= -1e-12)

    @settings(max_examples=200, deadline=None)
    @given(scalar_case())
    def test_rate_bounded_by_peak(self, case):
        belief, sensor, theta = case
        assert 0 <= expected_rate(belief, sensor, [theta]) <= sensor.h * (1 + 1e-12)


@st.composite
def weights(draw):
    P = draw(st.integers(2, 60))
    w = np.array(draw(st.lists(st.floats(0, 1, **finite), min_size=P, max_size=P)))
    if w.sum() <= 0:
        w[0] = 1.0
    return w / w.sum()


class TestResampleProperties:
    @settings(max_examples=200, deadline=None)
    @given(weights(), st.floats(0, 1, exclude_max=True, **finite))
    def test_counts_within_one_of_expectation(self, w, frac):
        P = w.size
        counts = np.bincount(systematic_resample(w, frac / P), minlength=P)
        assert counts.sum() == P
        assert np.all(np.abs(counts - P * w) < 1 + 1e-9)
        assert np.all(counts[w == 0] == 0)


class TestKSProperties:
    @settings(max_examples=200, deadline=None)
    @given(weights(), st.integers(0, 2**32 - 1))
    def test_in_unit_interval(self, w, seed):
        x = np.random.default_rng(seed).normal(size=w.size)
        if np.sum(w * (x - w @ x) ** 2) <= 1e-12:
            return
        assert 0 <= ks_statistic(ParticleEnsemble(x[:, None], w)) <= 1
