import csv
import io
import json
from dataclasses import replace

import numpy as np
import pytest

from aapt import channel as ch
from aapt import experiments as ex
from aapt import statesim as ss
from aapt import tomography as tm
from aapt.errors import CompletenessError, ConfigError, DegenerateEstimateError, DegenerateInputError, FitError

SMALL = ex.ExperimentConfig(n_values=(9_000, 90_000, 900_000), repetitions=5, base_seed=7)


def bound_inputs(s):
    suite = ss.cube_measurements(2)
    C = tm.measurement_parameterization_C(suite)
    E = ch.kraus_to_process(ch.phase_damping(2 / 3)).trace_map
    return E, suite.L, C, s


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = ex.ExperimentConfig()
        assert ex.ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_mode_normalized(self):
        assert ex.ExperimentConfig(mode="nontp").mode == tm.NON_TP

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_values": (5,)},
            {"repetitions": 0},
            {"dA": 2, "dB": 1, "n_qubits": 1},
            {"n_qubits": 3},
            {"mode": "bogus"},
            {"n_values": ()},
            {"input_state": ex.InputSpec("ghz")},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            ex.ExperimentConfig(**kwargs)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ex.ExperimentConfig.from_dict({"reps": 3})
        with pytest.raises(ConfigError):
            ex.ExperimentConfig.from_dict({"channel": {"nme": "x"}})

    def test_channel_file(self, tmp_path):
        path = tmp_path / "k.json"
        path.write_text(json.dumps(ch.channel_to_json(ch.phase_damping(0.4))))
        chan = ex.ChannelSpec(name="file", path=str(path)).build(2)
        np.testing.assert_allclose(chan.operators[1], np.diag([0, np.sqrt(0.4)]))
        with pytest.raises(ConfigError):
            ex.ChannelSpec(name="file", path=str(tmp_path / "missing.json")).build(2)
        with pytest.raises(ConfigError):
            ex.ChannelSpec(name="warp").build(2)


class TestRunTrial:
    def test_noiseless(self):
        assert ex.run_trial(SMALL, None, 0).mse < 1e-16
        assert ex.run_trial(SMALL, float("inf"), 3).mse < 1e-16

    def test_deterministic(self):
        assert ex.run_trial(SMALL, 90_000, 4).mse == ex.run_trial(SMALL, 90_000, 4).mse
        assert ex.run_trial(SMALL, 90_000, 4).mse != ex.run_trial(SMALL, 90_000, 5).mse

    def test_envelope(self):
        mse = ex.run_trial(SMALL, 900_000, 0).mse
        assert 1e-5 <= mse <= 1e-2

    def test_error_tagged_with_trial(self, monkeypatch):
        def boom(*args, **kwargs):
            raise DegenerateEstimateError("singular trace map")

        monkeypatch.setattr(tm, "aapt_reconstruct", boom)
        with pytest.raises(DegenerateEstimateError, match=r"trial 12 \(N=900\): singular"):
            ex.run_trial(SMALL, 900, 12)

    def test_mode_constraints(self):
        for mode, chan in [(tm.TP, ex.ChannelSpec()), (tm.NON_TP, ex.ChannelSpec("random", rank=2, tp=False, seed=5))]:
            cfg = replace(SMALL, mode=mode, channel=chan)
            for t in range(20):
                X = ex.run_trial(cfg, 9_000, t).Xhat
                assert np.linalg.eigvalsh(X.X)[0] >= -1e-10
                if mode == tm.TP:
                    assert np.linalg.norm(X.trace_map - np.eye(2)) <= 1e-10
                else:
                    assert np.linalg.eigvalsh(X.trace_map)[-1] <= 1 + 1e-8


class TestBound:
    def test_maximally_entangled_minimizes_inverse_sum(self):
        s = ss.operator_schmidt(ss.maximally_entangled_state(2), 2, 2).s
        assert np.sum(1 / s**2) == pytest.approx(16)

    def test_sqrt_scaling(self):
        E, L, C, s = bound_inputs(np.full(4, 0.5))
        a = ex.theoretical_bound(E, L, C, s, 1000, 2, 2)
        b = ex.theoretical_bound(E, L, C, s, 4000, 2, 2)
        assert b / a == pytest.approx(0.5, rel=1e-15)

    def test_closed_form(self):
        E, L, C, s = bound_inputs(np.full(4, 0.5))
        tr = np.trace(np.linalg.inv(C.T @ C))
        expected = 2 * np.sqrt(2) * 2 * np.sqrt(L * tr) * 4 / np.sqrt(100)
        assert ex.theoretical_bound(E, L, C, s, 100, 2, 2) == pytest.approx(expected, rel=1e-12)

    def test_random_inputs_are_worse(self):
        E, L, C, s_opt = bound_inputs(np.full(4, 0.5))
        best = ex.theoretical_bound(E, L, C, s_opt, 9000, 2, 2)
        for seed in range(50):
            s = ss.operator_schmidt(ss.random_full_schmidt_state(2, 2, seed), 2, 2).s
            assert ex.theoretical_bound(E, L, C, s, 9000, 2, 2) >= best

    def test_monotone_in_min_coefficient(self):
        # fixed sum of squares 0.8, raising the smallest coefficient lowers the bound
        E, L, C, _ = bound_inputs(None)
        vals = []
        for m in np.linspace(0.05, np.sqrt(0.2), 8):
            rest = np.sqrt((0.8 - m**2) / 3)
            vals.append(ex.theoretical_bound(E, L, C, np.array([rest, rest, rest, m]), 9000, 2, 2))
        assert np.all(np.diff(vals) < 0)

    def test_minimum_over_spectra(self, rng):
        E, L, C, _ = bound_inputs(None)
        best = ex.theoretical_bound(E, L, C, np.full(4, 0.5), 9000, 2, 2)
        for _ in range(500):
            s = rng.uniform(0.01, 1, 4)
            s /= np.linalg.norm(s) / rng.uniform(0.1, 1)  # sum of squares <= 1
            assert ex.theoretical_bound(E, L, C, s, 9000, 2, 2) >= best * (1 - 1e-12)

    def test_errors(self):
        E, L, C, s = bound_inputs(np.full(4, 0.5))
        with pytest.raises(CompletenessError):
            ex.theoretical_bound(E, L, C[:, :3] @ np.ones((3, 16)), s, 10, 2, 2)
        with pytest.raises(DegenerateInputError):
            ex.theoretical_bound(E, L, C, np.array([0.5, 0.5, 0.5, 0.0]), 10, 2, 2)


class TestSweep:
    def test_single_row(self):
        res = ex.mse_sweep(replace(SMALL, n_values=(9_000,), repetitions=1))
        assert len(res.rows) == 1 and res.rows[0].std_err == 0

    def test_decreasing_and_deterministic(self):
        cfg = replace(SMALL, n_values=(10_000, 100_000, 1_000_000), repetitions=20)
        a = ex.mse_sweep(cfg)
        b = ex.mse_sweep(cfg)
        assert a == b
        m = [r.mean_mse for r in a.rows]
        assert m[0] > m[1] > m[2]
        assert all(r.mean_mse >= 0 and r.std_err >= 0 for r in a.rows)

    def test_parallel_matches_serial(self):
        cfg = replace(SMALL, repetitions=4)
        assert ex.mse_sweep(cfg, jobs=2) == ex.mse_sweep(cfg, jobs=1)

    def test_std_err_halves_with_double_repetitions(self):
        # stdErr^2 ~ var/R: averaged over disjoint seeds the ratio concentrates at 2
        ratios = []
        for seed in range(10):
            a = ex.mse_sweep(replace(SMALL, n_values=(90_000,), repetitions=40, base_seed=seed))
            b = ex.mse_sweep(replace(SMALL, n_values=(90_000,), repetitions=80, base_seed=seed))
            ratios.append(a.rows[0].std_err ** 2 / b.rows[0].std_err ** 2)
        assert 1.4 < np.mean(ratios) < 2.8

    def test_output_formats(self):
        res = ex.mse_sweep(replace(SMALL, repetitions=2))
        files = ex.sweep_file_contents(res)
        trials = list(csv.reader(io.StringIO(files["trials.csv"])))
        assert trials[0] == ["N", "trial", "mse"] and len(trials) == 1 + 3 * 2
        assert float(trials[1][2]) == res.rows[0].per_trial[0]  # 17 significant digits round-trip
        summary = list(csv.reader(io.StringIO(files["summary.csv"])))
        assert summary[0] == ["N", "mean_mse", "std_err", "bound"] and len(summary) == 4
        doc = json.loads(files["sweep.json"])
        assert doc["rows"][2]["N"] == 900_000 and len(doc["rows"][2]["perTrialMSE"]) == 2


class TestCompare:
    def test_optimal_wins_and_shares_seeds(self):
        cfg = replace(SMALL, n_values=(90_000, 900_000), repetitions=10)
        cmp = ex.compare_input_states(cfg)
        for o, r in zip(cmp.optimal.rows, cmp.random.rows):
            assert o.mean_mse < r.mean_mse
        assert cmp.optimal.config.input_state.kind == "maximally_entangled"
        assert cmp.random.config.input_state.kind == "random_full_schmidt"

    def test_distinct_random_states(self):
        a = ex.input_state(replace(SMALL, input_state=ex.InputSpec("random_full_schmidt", 1)))
        b = ex.input_state(replace(SMALL, input_state=ex.InputSpec("random_full_schmidt", 2)))
        assert not np.allclose(a, b)

    def test_mse_tracks_inverse_square_sum(self):
        from scipy import stats

        cfg = replace(SMALL, n_values=(90_000,), repetitions=10)
        opt = ex.mse_sweep(replace(cfg, input_state=ex.InputSpec())).rows[0].mean_mse
        xs, ys = [], []
        for seed in range(10):
            c = replace(cfg, input_state=ex.InputSpec("random_full_schmidt", seed))
            xs.append(np.log(ex.prepare(c).schmidt.inverse_square_sum / 16))
            ys.append(np.log(ex.mse_sweep(c).rows[0].mean_mse / opt))
        assert stats.spearmanr(xs, ys).statistic > 0.5


class TestFit:
    def rows(self, f):
        return tuple(ex.SweepRow(N, f(N), 0.0, (), 0.0) for N in (1e3, 1e4, 1e5, 1e6))

    def test_inverse(self):
        fit = ex.fit_loglog_slope(self.rows(lambda N: 3 / N))
        assert fit.slope == pytest.approx(-1) and fit.r2 == pytest.approx(1)
        assert fit.intercept == pytest.approx(np.log(3))

    def test_inverse_sqrt(self):
        assert ex.fit_loglog_slope(self.rows(lambda N: 2 / np.sqrt(N))).slope == pytest.approx(-0.5)

    def test_errors(self):
        with pytest.raises(FitError):
            ex.fit_loglog_slope(self.rows(lambda N: 1 / N)[:2])
        with pytest.raises(FitError):
            ex.fit_loglog_slope(self.rows(lambda N: 0.0))

    def test_phase_damping_slope(self):
        res = ex.mse_sweep(replace(SMALL, repetitions=20))
        assert -1.15 <= ex.fit_loglog_slope(res).slope <= -0.85


def test_atomic_write(tmp_path):
    target = tmp_path / "sub" / "f.txt"
    ex.atomic_write(target, "hello\n")
    assert target.read_text() == "hello\n"
    assert [p.name for p in target.parent.iterdir()] == ["f.txt"]
