"""Monte-Carlo harness: seeding, cells, sweeps and filter comparisons."""

import math
import zlib

import numpy as np
import pytest

from ppadf.config import parse, serialize
from ppadf.errors import ConfigError
from ppadf.simulate import SpikeArrays
from ppadf.sweep import (
    STREAM_TAGS,
    SweepSpec,
    TrialData,
    coarsen,
    compare_pf,
    compare_uniform,
    parse_grid,
    parse_window,
    run_cell,
    run_sweep,
    simulate_trial,
    stream,
    variance_curve,
)


def encoding_doc(d=1.0, c=0.0, s2=10.0, T=2.0):
    return {
        "dynamics": {"A": [[-0.05]], "D": [[d]]},
        "sensor": {"h": 50.0, "sigma_r2": 1.0},
        "population": {"kind": "gaussian", "c": c, "sigma_pop2": s2},
        "sim": {"dt": 0.001, "T": T},
    }


def static_doc(h=10.0, s2=0.5, T=1.0):
    return {
        "dynamics": {"A": [[0.0]], "D": [[0.0]]},
        "sensor": {"h": h, "sigma_r2": 0.1},
        "population": {"kind": "gaussian", "c": 0.0, "sigma_pop2": s2},
        "sim": {"dt": 0.001, "T": T, "x0": [0.5]},
        "filter": {"mu0": [0.0], "Sigma0": [[1.0]]},
    }


class TestStreams:
    def test_no_collisions(self):
        seen = set()
        for tag in STREAM_TAGS:
            for cell in range(40):
                for trial in range(40):
                    seen.add(int(stream(123, tag, cell, trial).integers(0, 2**63)))
        assert len(seen) == len(STREAM_TAGS) * 40 * 40

    def test_tags_hash_apart(self):
        assert len({zlib.crc32(t.encode()) for t in STREAM_TAGS}) == len(STREAM_TAGS)

    def test_reproducible(self):
        a = stream(5, "simulate", 2, 3).standard_normal(4)
        b = stream(5, "simulate", 2, 3).standard_normal(4)
        np.testing.assert_array_equal(a, b)

    def test_unknown_tag(self):
        with pytest.raises(ValueError):
            stream(0, "other")


class TestCoarsen:
    def test_spikes_move_to_containing_step(self):
        sp = SpikeArrays(np.array([1, 2, 3, 8]), np.zeros((4, 1)), np.zeros(4, dtype=np.int64), 0.1)
        td = coarsen(np.arange(9.0)[:, None], sp, 2)
        np.testing.assert_array_equal(td.spikes.steps, [1, 1, 2, 4])
        np.testing.assert_array_equal(td.states[:, 0], [0, 2, 4, 6, 8])


class TestRunCell:
    def test_no_observations_is_exactly_one(self):
        r = run_cell(parse(static_doc(h=0.0)), 5, (0.2, 0.8), seed=0)
        assert r.mean == 1.0 and r.se == 0.0 and r.n_divergent == 0

    def test_single_trial_has_no_se(self):
        r = run_cell(parse(encoding_doc(T=1.0)), 1, (0.5, 1.0), seed=0)
        assert r.se is None and r.n_trials == 1

    def test_matched_beats_wide_population(self):
        matched = run_cell(parse(encoding_doc(s2=10.0)), 200, (1.0, 2.0), seed=1)
        wide = run_cell(parse(encoding_doc(s2=1000.0)), 200, (1.0, 2.0), seed=1)
        assert matched.mean < wide.mean
        # rare variance blow-ups give the matched cell a heavy upper tail, so compare typical trials too
        assert np.median(matched.values) < 0.8 * np.median(wide.values)

    def test_sign_symmetry(self):
        pos = run_cell(parse(encoding_doc(d=0.1, c=1.0, s2=0.05)), 200, (1.0, 2.0), seed=2, cell=0)
        neg = run_cell(parse(encoding_doc(d=0.1, c=-1.0, s2=0.05)), 200, (1.0, 2.0), seed=2, cell=1)
        assert abs(pos.mean - neg.mean) < 2 * math.hypot(pos.se, neg.se)

    def test_mse_criterion(self):
        r = run_cell(parse(encoding_doc(T=1.0)), 10, (0.5, 1.0), seed=0, criterion="mse")
        assert r.mean > 0 and not r.exceeds_prior

    def test_divergent_trials_counted(self):
        # a coarse step far in the tail of a bright population drives the covariance negative
        doc = static_doc(h=1e4, s2=1.0)
        doc["filter"] = {"mu0": [3.0], "Sigma0": [[1.0]]}
        doc["sim"].update(dt=0.01, x0=[10.0])
        r = run_cell(parse(doc), 3, (0.5, 1.0), seed=0)
        assert r.n_divergent == 3 and r.n_trials == 0 and r.se is None

    def test_invalid_arguments(self):
        with pytest.raises(ConfigError):
            run_cell(parse(encoding_doc()), 0, (1.0, 2.0), seed=0)
        with pytest.raises(ConfigError):
            run_cell(parse(encoding_doc()), 2, (1.0, 3.0), seed=0)


class TestSweep:
    def spec(self, **kw):
        base = serialize(parse(encoding_doc(T=1.0)))
        return SweepSpec(base, parse_grid("c=0,1;sigma_pop2=1,10"), kw.pop("trials", 8), (0.5, 1.0), seed=4, **kw)

    def test_grid_parsing(self):
        assert parse_grid("c=0,0.5; sigma_pop2=1") == (("c", (0.0, 0.5)), ("sigma_pop2", (1.0,)))
        for bad in ("", "c", "c=", "c=a"):
            with pytest.raises(ConfigError):
                parse_grid(bad)
        assert parse_window("1:2") == (1.0, 2.0)
        with pytest.raises(ConfigError):
            parse_window("2:1")

    def test_cells_order(self):
        assert self.spec().cells() == [(0.0, 1.0), (0.0, 10.0), (1.0, 1.0), (1.0, 10.0)]

    def test_independent_of_jobs(self):
        spec = self.spec()
        a = run_sweep(spec, jobs=1)
        b = run_sweep(spec, jobs=3)
        assert a.rows() == b.rows()

    def test_single_cell_is_run_cell(self):
        base = serialize(parse(encoding_doc(T=1.0)))
        spec = SweepSpec(base, (("c", (0.5,)),), 6, (0.5, 1.0), seed=9)
        res = run_sweep(spec, jobs=1)
        direct = run_cell(spec.cell_config((0.5,)), 6, (0.5, 1.0), 9, 0)
        assert res.cells[0][1] == direct

    def test_best_and_header(self):
        res = run_sweep(self.spec(), jobs=1)
        assert res.header() == ["c", "sigma_pop2", "mean_rel_sd", "se", "n_trials", "n_divergent", "exceeds_prior"]
        best_v, best_r = res.best()
        assert best_r.mean == min(r.mean for _, r in res.cells)

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            self.spec(trials=0)


class TestCompareUniform:
    def test_adf_beats_uniform(self):
        r = compare_uniform(parse(static_doc(T=3.0)), 60, (1.0, 3.0), seed=0)
        assert r.mse_adf < r.mse_uniform and r.n_trials == 60

    def test_infinite_population_matches_uniform(self):
        r = compare_uniform(parse(static_doc(T=2.0)), 10, (1.0, 2.0), seed=0, sigma_pop2=1e12)
        a, u = np.array(r.per_trial).T
        np.testing.assert_allclose(a, u, rtol=0, atol=1e-10)

    def test_injected_streams(self):
        cfg = parse(static_doc(T=2.0))
        prior = cfg.belief0()
        data = [simulate_trial(cfg, prior, 1e-3, 2.0, stream(0, "simulate", 0, i)) for i in range(5)]
        injected = compare_uniform(cfg, 999, (1.0, 2.0), 12345, streams=data)
        simulated = compare_uniform(cfg, 5, (1.0, 2.0), 0)
        assert injected.per_trial == simulated.per_trial

    def test_silent_stream_separates_filters(self):
        doc = static_doc(T=2.0)
        doc["filter"]["mu0"] = [0.2]
        cfg = parse(doc)
        empty = SpikeArrays(np.zeros(0, np.int64), np.zeros((0, 1)), np.zeros(0, np.int64), 0.0)
        td = TrialData(np.full((2001, 1), 0.5), empty, 0.0)
        r = compare_uniform(cfg, 1, (1.0, 2.0), 0, streams=[td])
        # without spikes the uniform filter keeps its prior mean; the full filter is pushed away from
        # c = 0, past the true state, because two silent seconds near a bright population are unlikely
        np.testing.assert_allclose(r.mse_uniform, 0.09, rtol=1e-12)
        assert r.mse_adf > r.mse_uniform

    def test_requires_gaussian_population(self):
        doc = static_doc()
        doc["population"] = {"kind": "uniform"}
        with pytest.raises(ConfigError):
            compare_uniform(parse(doc), 2, (0.5, 1.0), 0)


class TestVarianceCurve:
    def test_shape_and_start(self):
        doc = static_doc(h=10.0, s2=4.0)
        doc["sim"]["x0"] = "prior"
        vc = variance_curve(parse(doc), 20, seed=0)
        assert vc.mean.shape == (1001,) and vc.n_trials == 20
        assert vc.mean[0] == 1.0 and vc.se[0] == 0.0


class TestComparePF:
    def test_no_sensor(self):
        doc = encoding_doc(T=0.2)
        doc["sensor"]["h"] = 0.0
        doc["filter"] = {"mu0": [0.0], "Sigma0": [[1.0]], "particles": 4000}
        r = compare_pf(parse(doc), 2, seed=0, dt=0.01)
        mu = np.array([rec.eps_mu for rec in r.records])
        assert np.max(np.abs(mu)) < 5 / math.sqrt(4000) * 3
        assert r.n_trials == 2 and r.stats.count == 40

    def test_large_errors_at_high_ks(self):
        cfg = parse({
            "dynamics": {"A": [[-0.1]], "D": [[1.0]]},
            "sensor": {"h": 20.0, "sigma_r2": 0.25},
            "population": {"kind": "gaussian", "c": 0.0, "sigma_pop2": 4.0},
            "sim": {"dt": 0.001, "T": 1.0},
            "filter": {"mu0": [0.0], "Sigma0": [[1.0]], "particles": 500},
        })
        r = compare_pf(cfg, 4, seed=1)
        eps = np.array([abs(x.eps_mu) for x in r.records])
        ks = np.array([x.ks for x in r.records])
        top = eps >= np.quantile(eps, 0.99)
        assert ks[top].mean() > ks.mean()

    def test_scalar_only(self):
        doc = {
            "dynamics": {"A": [[-1.0, 0.0], [0.0, -1.0]], "D": [[1.0, 0.0], [0.0, 1.0]]},
            "sensor": {"h": 1.0, "H": [[1.0, 0.0]], "sigma_r2": 1.0},
            "population": {"kind": "uniform"},
        }
        with pytest.raises(ConfigError):
            compare_pf(parse(doc), 1, seed=0)
