import csv
import math

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from beliefmppi import belief as bl
from beliefmppi.controller import MppiConfig, RolloutBatch
from beliefmppi.harness import (
    ExperimentConfig,
    emit_outputs,
    load_config,
    read_episodes,
    run_episode,
    run_trials,
    savgol_smooth,
)
from beliefmppi.harness import theorems as th
from beliefmppi.harness.io import METRICS, read_metrics, table_from_log
from beliefmppi.harness.trials import MetricsTable, fisher_greater, proportion_upper, trial_seed
from beliefmppi.system import SlotTestbed


def noiseless(**kw):
    tb = SlotTestbed(sigma_w=0.0, sigma_v=0.0)
    return ExperimentConfig(sigma_p=0.0, w_jitter=0.0, testbed=tb, **kw)


class TestConfig:
    def test_yaml_sections_and_renames(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump({
            "mppi": {"K": 32, "H": 10, "N_p": 16, "lambda": 0.3, "sigma": 12.0},
            "risk": {"beta_s": 0.95, "beta_c": 0.9, "lambda_r": 0.2, "mu": 100},
            "task": {"d_min": 1.5, "sigma_p": 10.0, "eps_p": 50.0},
            "experiment": {"trials": 7, "seed": 3, "variant": "cc"},
            "testbed": {"sigma_v": 4.0},
        }))
        cfg = load_config(path)
        assert (cfg.K, cfg.H, cfg.lam, cfg.sigma) == (32, 10, 0.3, 12.0)
        assert (cfg.beta_s, cfg.beta_c, cfg.lambda_r, cfg.mu) == (0.95, 0.9, 0.2, 100)
        assert (cfg.n_trials, cfg.seed, cfg.variant, cfg.sigma_p) == (7, 3, "cc", 10.0)
        assert (cfg.testbed.d_min, cfg.testbed.eps_p, cfg.testbed.sigma_v) == (1.5, 50.0, 4.0)

    def test_round_trip_and_digest(self):
        cfg = ExperimentConfig(beta_s=0.95, seed=9)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg
        assert again.digest() == cfg.digest()
        assert cfg.replace(seed=10).digest() != cfg.digest()

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("risk: {beta_z: 0.9}\n")
        with pytest.raises(ValueError):
            load_config(path)

    @pytest.mark.parametrize("kw", [{"variant": "x"}, {"n_trials": 0}, {"beta_s": 1.2}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    def test_labels_and_variants(self):
        assert ExperimentConfig(beta_s=0.5).label() == "cvar_bs0.5_bc0.5_lr0.5"
        assert ExperimentConfig(variant="cc").label() == "cc_delta0.05_bs0.9"
        neutral = ExperimentConfig(variant="neutral").mppi_config()
        assert neutral.lambda_r == 0.0 and neutral.mu == 0.0


class TestEpisode:
    def test_single_step(self):
        rec = run_episode(ExperimentConfig(T=1), seed=0)
        assert rec.n_steps == 1

    def test_noiseless_point_mass_succeeds(self):
        rec = run_episode(noiseless(T=100), seed=1)
        assert rec.success
        assert not rec.contact
        assert rec.max_force == 0.0

    def test_deterministic(self):
        cfg = ExperimentConfig(T=15)
        a, b = run_episode(cfg, 5), run_episode(cfg, 5)
        assert a.to_dict() == b.to_dict()

    def test_record_round_trip(self):
        rec = run_episode(ExperimentConfig(T=3), seed=2)
        from beliefmppi.harness import EpisodeRecord
        assert EpisodeRecord.from_dict(rec.to_dict()).to_dict() == rec.to_dict()


class TestSmoothing:
    def test_constant(self):
        np.testing.assert_allclose(savgol_smooth(np.full(20, 3.5)), 3.5)

    def test_ramp(self):
        x = np.linspace(-4.0, 9.0, 31)
        np.testing.assert_allclose(savgol_smooth(x, 7, 1), x, atol=1e-9)

    def test_spike_on_quadratic(self):
        t = np.arange(41.0)
        q = 0.05 * t**2 - t + 3.0
        y = q.copy()
        y[20] += 10.0
        s = savgol_smooth(y, 9, 2)
        assert abs(s[20] - q[20]) < 0.5 * 10.0
        far = np.r_[0:10, 31:41]
        np.testing.assert_allclose(s[far], q[far], atol=1e-9)

    def test_columns_independent(self):
        a = np.random.default_rng(0).normal(size=(15, 2))
        s = savgol_smooth(a, 5, 2)
        np.testing.assert_allclose(s[:, 1], savgol_smooth(a[:, 1], 5, 2))

    @pytest.mark.parametrize("window,degree", [(4, 2), (3, 3), (0, 0), (99, 2)])
    def test_bad_arguments(self, window, degree):
        with pytest.raises(ValueError):
            savgol_smooth(np.zeros(20), window, degree)


class TestTrialsAndOutputs:
    def test_single_trial_matches_episode(self):
        cfg = ExperimentConfig(T=10)
        table, records = run_trials(cfg, n_trials=1)
        rec = run_episode(cfg, trial_seed(cfg.seed, 0))
        row = table.rows[0]
        assert row.n_trials == 1
        assert row.success_rate == 100.0 * rec.success
        assert row.max_force == rec.max_force
        assert row.min_margin == rec.min_margin
        assert row.final_distance == rec.final_distance

    def test_noiseless_rates(self):
        table, _ = run_trials(noiseless(), n_trials=3)
        row = table.rows[0]
        assert row.success_rate == 100.0
        assert row.contact_rate == 0.0

    def test_trial_seeds_independent_of_count(self):
        assert [trial_seed(4, i) for i in range(3)] == [trial_seed(4, i) for i in range(5)][:3]

    def test_jsonl_round_trip(self, tmp_path):
        cfg = ExperimentConfig(T=5)
        table, records = run_trials(cfg, n_trials=2)
        paths = emit_outputs([(cfg.label(), records)], table, tmp_path, [cfg], cfg.seed)
        head, runs = read_episodes(paths["episodes"])
        assert head["seed"] == cfg.seed and head["labels"] == [cfg.label()]
        back = runs[cfg.label()]
        assert [r.to_dict() for r in back] == [r.to_dict() for r in records]
        _, _, rebuilt = table_from_log(paths["episodes"])
        assert rebuilt.rows[0].as_list() == table.rows[0].as_list()
        rows = read_metrics(paths["metrics"])
        assert float(rows[0]["min_margin"]) == table.rows[0].min_margin

    def test_zero_episodes_header_only(self, tmp_path):
        cfg = ExperimentConfig()
        emit_outputs([], MetricsTable(), tmp_path, [cfg], 0)
        with open(tmp_path / METRICS) as fh:
            lines = fh.read().splitlines()
        assert lines[0].startswith("# config_sha256=")
        assert len(lines) == 2
        assert next(csv.reader(lines[1:]))[0] == "label"

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            emit_outputs([], MetricsTable(), blocker / "sub", [ExperimentConfig()], 0)


class TestStatistics:
    def test_fisher_direction(self):
        assert fisher_greater(14, 50, 1, 50) < 0.05
        assert fisher_greater(1, 50, 14, 50) > 0.5

    def test_wilson_bound(self):
        assert proportion_upper(0, 50) == pytest.approx(0.0513, abs=1e-3)
        assert proportion_upper(50, 50) == 1.0


class TestSafetyChecks:
    def test_band_at_ten_thousand(self):
        assert th.binomial_band(0.95, 10_000) == pytest.approx(0.0065, abs=1e-4)

    def test_always_safe_sequence(self):
        tb = SlotTestbed()
        belief = bl.init_gaussian([0.0, 48.75], [3.0, 1.0], 64, np.random.default_rng(0))
        x = tb.initial_state([0.0, 48.75], 120.0)
        m = th.margin_samples(tb, x, np.zeros((12, 2)), belief, 2000, np.random.default_rng(1))
        assert np.mean(m >= 0) == 1.0

    @pytest.mark.parametrize("beta,T,bound", [(0.9, 9, 0.1), (0.95, 5, 0.75)])
    def test_cumulative_bound(self, beta, T, bound):
        assert 1.0 - T * (1.0 - beta) == pytest.approx(bound)

    def test_cumulative_bound_vacuous_past_limit(self):
        rep = th.verify_thm3(ExperimentConfig(beta_s=0.9), T=10, n_runs=1)
        assert rep.status == "vacuous"

    def test_thm1_small(self):
        rep = th.verify_thm1(ExperimentConfig(beta_s=0.9), n_validation=2000, seed=0)
        assert rep.status == "pass", rep.summary()

    def test_thm3_small(self):
        rep = th.verify_thm3(ExperimentConfig(beta_s=0.95), T=3, n_runs=20, seed=1)
        assert rep.status in ("pass", "vacuous"), rep.summary()
        assert rep.status == "pass"


class TestRiskNeutralLimit:
    def test_crossover_batch(self):
        batch = th.crossover_batch(16, 0.9)
        rep = th.verify_thm2(batch, [0.5, 0.0], MppiConfig(beta_c=0.9))
        assert rep.passed
        assert rep.details["lambda_star"] == pytest.approx(1 / 6)
        assert rep.details["choices"] == [1, 0]
        assert rep.details["crossover"]

    def test_zero_weight_coincides(self):
        rng = np.random.default_rng(0)
        batch = RolloutBatch(rng.uniform(0, 9, (10, 16)), np.ones((10, 16)))
        rep = th.verify_thm2(batch, [0.0], MppiConfig())
        assert rep.passed
        assert rep.details["choices"][0] in rep.details["mean_argmin"]

    def test_single_candidate(self):
        batch = RolloutBatch(np.ones((1, 16)), np.ones((1, 16)))
        rep = th.verify_thm2(batch, [0.5, 0.1], MppiConfig())
        assert rep.passed and math.isinf(rep.details["lambda_star"])

    def test_empty_feasible_set(self):
        batch = RolloutBatch(np.ones((2, 16)), -np.ones((2, 16)))
        assert th.verify_thm2(batch, [0.5], MppiConfig()).status == "vacuous"

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), frac=st.floats(0.0, 0.999))
    def test_below_critical_selects_mean_minimiser(self, seed, frac):
        rng = np.random.default_rng(seed)
        mean = rng.integers(0, 6, 8).astype(float)
        cvar = rng.uniform(0, 10, 8)
        lam_star = th.critical_lambda(mean, cvar)
        lam = frac * (lam_star if np.isfinite(lam_star) else 100.0)
        j = int(np.argmin(mean + lam * cvar))
        assert mean[j] == mean.min()

    def test_random_batches_have_feasible_sets(self):
        cfg = ExperimentConfig()
        batches = th.random_batches(cfg, 5, seed=0)
        reps = [th.verify_thm2(b, [0.5, 0.1, 0.0], cfg) for b in batches]
        assert all(r.passed for r in reps)


def test_magnitude_sensitivity_small():
    rep = th.magnitude_sensitivity(n_batches=50)
    assert rep.passed


def test_limit_through_decreasing_weights():
    # lambda_r stepping down through 0.5, 0.1, 0.01, 0.001 ends on a mean minimiser
    for batch in th.random_batches(ExperimentConfig(), 20, seed=3):
        rep = th.verify_thm2(batch, [0.5, 0.1, 0.01, 0.001], MppiConfig(beta_c=0.9, beta_s=0.9))
        assert rep.status in ("pass", "vacuous")


def test_episode_invariants():
    cfg = ExperimentConfig(T=60)
    for seed in range(4):
        rec = run_episode(cfg, seed)
        assert rec.n_steps <= cfg.T
        if rec.success:
            assert rec.final_distance <= cfg.testbed.eps_p
        cv = [s.diagnostics["chosen_cvar_violation"] for s in rec.steps]
        assert rec.n_infeasible == sum(v > 0 for v in cv)


def test_shipped_config_matches_defaults():
    import pathlib
    path = pathlib.Path(__file__).resolve().parents[1] / "configs" / "default.yaml"
    assert load_config(path) == ExperimentConfig(beta_c=0.9)
