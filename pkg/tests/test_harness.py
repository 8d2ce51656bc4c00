"""Tests for the Monte Carlo harness: determinism, rate fits, lemma suite."""

import numpy as np
import pytest

from shiftlab import (
    ExperimentConfig,
    GROUP_SHIFT,
    LABEL_SHIFT,
    RateUndefinedError,
    SweepConfig,
    TrialRecord,
    fit_rate,
    minority_majority_sweep,
    run_experiment,
    verify_lemmas,
)
from shiftlab.harness import envelope_constant, trit_gap_expectation

SMALL_CFG = ExperimentConfig(
    scenario=LABEL_SHIFT,
    family_k=2,
    n_min_grid=(8, 16, 32),
    seed=314,
    estimators=("undersampled_binning", "full_binning"),
    rho=2.0,
    replications=10,
)


def synthetic_records(values_by_n):
    return [
        TrialRecord(
            scenario=LABEL_SHIFT,
            estimator="undersampled_binning",
            n_min=n,
            n_maj=2 * n,
            tau=None,
            k_bins=2,
            replication_id=i,
            seed_used=0,
            risk=0.5,
            bayes_risk=0.5 - v,
            excess_risk=v,
        )
        for n, vals in values_by_n.items()
        for i, v in enumerate(vals)
    ]


class TestRunExperiment:
    def test_record_count(self):
        recs = run_experiment(SMALL_CFG)
        assert len(recs) == 3 * 2 * 10

    def test_deterministic_rerun(self):
        assert run_experiment(SMALL_CFG) == run_experiment(SMALL_CFG)

    def test_worker_count_invariance(self):
        assert run_experiment(SMALL_CFG, threads=1) == run_experiment(SMALL_CFG, threads=2)

    def test_unknown_estimator_fails_fast(self):
        cfg = ExperimentConfig(
            scenario=LABEL_SHIFT,
            family_k=2,
            n_min_grid=(8,),
            seed=1,
            estimators=("nearest_neighbor",),
        )
        with pytest.raises(ValueError, match="nearest_neighbor"):
            run_experiment(cfg)

    def test_record_invariants(self):
        for r in run_experiment(SMALL_CFG):
            assert 0.0 <= r.bayes_risk <= r.risk <= 1.0
            assert abs(r.excess_risk - (r.risk - r.bayes_risk)) < 1e-12
            assert r.n_maj == 2 * r.n_min

    def test_downward_trend_and_envelope(self):
        cfg = ExperimentConfig(
            scenario=LABEL_SHIFT,
            family_k=4,
            n_min_grid=(64, 512, 4096),
            seed=99,
            estimators=("undersampled_binning",),
            rho=2.0,
            replications=60,
            family_rule="match_bins",
        )
        recs = run_experiment(cfg, threads=2)
        by_n = {}
        for r in recs:
            by_n.setdefault(r.n_min, []).append(r.excess_risk)
        means = {n: np.mean(v) for n, v in by_n.items()}
        ses = {n: np.std(v, ddof=1) / np.sqrt(len(v)) for n, v in by_n.items()}
        ns = sorted(means)
        assert all(means[n] > 0 for n in ns)
        assert all(means[a] > means[b] for a, b in zip(ns, ns[1:]))
        c = envelope_constant(recs)
        for n in ns:
            assert means[n] <= c * n ** (-1.0 / 3.0) + 3 * ses[n]

    def test_fixed_index_mode_shares_instance(self):
        cfg = ExperimentConfig(
            scenario=GROUP_SHIFT,
            family_k=3,
            n_min_grid=(16,),
            seed=5,
            estimators=("undersampled_binning",),
            tau=0.5,
            replications=8,
            index_mode="fixed",
        )
        recs = run_experiment(cfg)
        assert len({r.bayes_risk for r in recs}) == 1

    def test_posterior_oracle_uses_family_bins(self):
        cfg = ExperimentConfig(
            scenario=LABEL_SHIFT,
            family_k=3,
            n_min_grid=(50,),
            seed=5,
            estimators=("posterior_oracle", "undersampled_binning"),
            replications=2,
        )
        recs = run_experiment(cfg)
        ks = {r.estimator: r.k_bins for r in recs}
        assert ks["posterior_oracle"] == 3
        assert ks["undersampled_binning"] == 4  # ceil(50 ** (1/3))


class TestFitRate:
    def test_exact_cube_root_law(self):
        recs = synthetic_records({n: [n ** (-1.0 / 3.0)] for n in (10, 100, 1000)})
        fit = fit_rate(recs)
        assert abs(fit.slope + 1.0 / 3.0) < 1e-12
        assert abs(fit.r_squared - 1.0) < 1e-12
        assert fit.n_points == 3

    def test_scaled_square_root_law(self):
        recs = synthetic_records({n: [5.0 * n**-0.5] for n in (10, 100, 1000, 10_000)})
        fit = fit_rate(recs)
        assert abs(fit.slope + 0.5) < 1e-12
        assert abs(fit.intercept - np.log(5.0)) < 1e-12

    def test_too_few_points(self):
        recs = synthetic_records({10: [0.1], 100: [0.05]})
        with pytest.raises(RateUndefinedError):
            fit_rate(recs)

    def test_nonpositive_mean_reported(self):
        recs = synthetic_records({10: [0.1], 100: [0.05], 1000: [0.0]})
        with pytest.raises(RateUndefinedError, match="1000"):
            fit_rate(recs)


class TestVerifyLemmas:
    def test_all_pass_through_k16(self):
        report = verify_lemmas(16)
        assert report.all_passed
        assert report.max_abs_delta < 1e-9

    def test_trit_expectation_exact(self):
        from fractions import Fraction

        assert trit_gap_expectation() == Fraction(8, 9)

    def test_corrupted_tolerance_fails(self):
        report = verify_lemmas(4, tolerance_scale=0.0)
        assert not report.all_passed
        assert report.failures()

    def test_report_table_mentions_constants(self):
        text = verify_lemmas(2).to_text()
        assert "hat_abs_integral" in text
        assert "kl_one_bin" in text
        assert "trit_gap_expectation" in text
        assert "family_bayes_risk" in text
        assert "step_overlap" in text


class TestSweep:
    def _cfg(self, **over):
        base = dict(
            scenario=LABEL_SHIFT,
            family_k=2,
            base_n_min=8,
            base_n_maj=32,
            factors=(1, 2),
            seed=77,
            arms=("add_minority", "add_majority", "add_both"),
            estimators=("undersampled_binning",),
            replications=5,
        )
        base.update(over)
        return SweepConfig(**base)

    def test_cell_structure(self):
        recs = minority_majority_sweep(self._cfg())
        assert len(recs) == 3 * 2 * 5
        sizes = {(r.n_min, r.n_maj) for r in recs}
        assert sizes == {(8, 32), (16, 32), (8, 64), (16, 64)}

    def test_deterministic(self):
        assert minority_majority_sweep(self._cfg()) == minority_majority_sweep(self._cfg())

    def test_rejects_unbalanced_arm(self):
        with pytest.raises(ValueError, match="add_minority"):
            minority_majority_sweep(self._cfg(base_n_maj=8, factors=(1, 4)))

    def test_arm_statistics_under_zero_overlap(self):
        # the undersampled estimator discards extra majority samples, so the
        # add-majority arm is flat, while adding minority samples helps and
        # adding both behaves like adding minority only
        cfg = self._cfg(
            scenario=GROUP_SHIFT,
            tau=0.0,
            family_k=4,
            base_n_min=64,
            base_n_maj=256,
            factors=(1, 4),
            replications=60,
            family_rule="match_bins",
        )
        recs = minority_majority_sweep(cfg, threads=2)
        cells = {}
        for r in recs:
            cells.setdefault((r.n_min, r.n_maj), []).append(r.excess_risk)
        mean = {k: np.mean(v) for k, v in cells.items()}
        se = {k: np.std(v, ddof=1) / np.sqrt(len(v)) for k, v in cells.items()}

        def close(a, b):
            return abs(mean[a] - mean[b]) <= 3 * np.hypot(se[a], se[b]) + 1e-12

        base, add_min = (64, 256), (256, 256)
        add_maj, add_both = (64, 1024), (256, 1024)
        assert close(base, add_maj)  # flat across the majority arm
        assert mean[add_min] < mean[base]  # 4x minority strictly helps
        assert close(add_min, add_both)  # extra majority adds nothing on top


class TestConfigValidation:
    def test_collects_all_errors(self):
        cfg = ExperimentConfig(
            scenario="covariate",
            family_k=0,
            n_min_grid=(),
            seed=-1,
            estimators=("mystery",),
            replications=0,
        )
        errs = cfg.validate()
        text = "\n".join(errs)
        for fragment in ("scenario", "family_k", "n_min_grid", "seed", "mystery", "replications"):
            assert fragment in text

    def test_tau_only_for_group_shift(self):
        cfg = ExperimentConfig(
            scenario=LABEL_SHIFT, family_k=2, n_min_grid=(8,), seed=1, tau=0.5
        )
        assert any("tau" in e for e in cfg.validate())
        cfg = ExperimentConfig(scenario=GROUP_SHIFT, family_k=2, n_min_grid=(8,), seed=1)
        assert any("tau" in e for e in cfg.validate())

    def test_n_maj_grid_must_dominate(self):
        cfg = ExperimentConfig(
            scenario=LABEL_SHIFT,
            family_k=2,
            n_min_grid=(8, 16),
            seed=1,
            n_maj_grid=(8, 8),
        )
        assert any("n_maj" in e for e in cfg.validate())
