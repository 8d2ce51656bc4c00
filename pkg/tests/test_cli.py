"""Tests for the command-line front end and its file formats."""

import json
import math
import os

import numpy as np
import pytest

from shiftlab.cli import (
    ConfigError,
    CSV_COLUMNS,
    main,
    parse_config,
    parse_sweep_config,
    read_records_csv,
    records_csv_text,
    summarize,
)
from shiftlab.harness import TrialRecord


MINIMAL_YAML = """
scenario: label_shift
family_k: 4
n_min_grid: [8, 16]
seed: 123
"""

SMALL_RUN_YAML = """
scenario: label_shift
family_k: 2
n_min_grid: [8, 16, 32]
rho: 2
estimators: [undersampled_binning, full_binning]
replications: 10
seed: 2024
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestParseConfig:
    def test_minimal_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path, "c.yaml", MINIMAL_YAML))
        assert cfg.estimators == ("undersampled_binning",)
        assert cfg.replications == 100
        assert cfg.index_mode == "fresh"
        assert cfg.bin_rule == "cube_root"
        assert cfg.bin_multiplier == 1.0
        assert cfg.family_rule == "fixed"

    def test_tau_on_label_shift_rejected(self, tmp_path):
        path = write(tmp_path, "c.yaml", MINIMAL_YAML + "tau: 0.5\n")
        with pytest.raises(ConfigError, match="tau"):
            parse_config(path)

    def test_zero_replications_rejected(self, tmp_path):
        path = write(tmp_path, "c.yaml", MINIMAL_YAML + "replications: 0\n")
        with pytest.raises(ConfigError, match="replications"):
            parse_config(path)

    def test_all_violations_reported_at_once(self, tmp_path):
        path = write(
            tmp_path,
            "c.yaml",
            "scenario: sideways\nfamily_k: 0\nn_min_grid: []\nseed: 3\nbanana: 1\n",
        )
        with pytest.raises(ConfigError) as err:
            parse_config(path)
        for fragment in ("scenario", "family_k", "n_min_grid", "banana"):
            assert fragment in str(err.value)

    def test_json_config_accepted(self, tmp_path):
        payload = {
            "scenario": "group_shift",
            "family_k": 2,
            "n_min_grid": [8],
            "tau": 0.25,
            "seed": 5,
        }
        cfg = parse_config(write(tmp_path, "c.json", json.dumps(payload)))
        assert cfg.tau == 0.25

    def test_seed_override(self, tmp_path):
        cfg = parse_config(write(tmp_path, "c.yaml", MINIMAL_YAML), seed_override=777)
        assert cfg.seed == 777

    def test_sweep_config(self, tmp_path):
        text = (
            "scenario: group_shift\nfamily_k: 2\ntau: 0.0\nbase_n_min: 8\n"
            "base_n_maj: 32\nfactors: [1, 2, 4]\nseed: 11\n"
        )
        cfg = parse_sweep_config(write(tmp_path, "s.yaml", text))
        assert cfg.factors == (1, 2, 4)
        assert cfg.arms == ("add_minority", "add_majority", "add_both")


class TestCmdRun:
    def test_writes_bundle_with_expected_shapes(self, tmp_path, capsys):
        config = write(tmp_path, "c.yaml", SMALL_RUN_YAML)
        out = tmp_path / "out"
        assert main(["run", "--config", config, "--out", str(out)]) == 0
        lines = (out / "records.csv").read_text().splitlines()
        assert len(lines) == 3 * 2 * 10 + 1
        assert lines[0] == ",".join(CSV_COLUMNS)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 2024
        assert manifest["tool"] == "shiftlab"
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["cells"]) == 6

    def test_thread_count_does_not_change_bytes(self, tmp_path, capsys):
        config = write(tmp_path, "c.yaml", SMALL_RUN_YAML)
        out1, out8 = tmp_path / "t1", tmp_path / "t8"
        assert main(["run", "--config", config, "--out", str(out1), "--threads", "1"]) == 0
        assert main(["run", "--config", config, "--out", str(out8), "--threads", "8"]) == 0
        assert (out1 / "records.csv").read_bytes() == (out8 / "records.csv").read_bytes()
        assert (out1 / "summary.json").read_bytes() == (out8 / "summary.json").read_bytes()

    def test_rerun_replaces_outputs(self, tmp_path, capsys):
        config = write(tmp_path, "c.yaml", SMALL_RUN_YAML)
        out = tmp_path / "out"
        main(["run", "--config", config, "--out", str(out)])
        first = (out / "records.csv").read_bytes()
        main(["run", "--config", config, "--out", str(out)])
        assert (out / "records.csv").read_bytes() == first
        assert not [p for p in os.listdir(out) if p.startswith(".tmp-")]

    def test_bad_config_nonzero_exit(self, tmp_path, capsys):
        config = write(tmp_path, "c.yaml", "scenario: label_shift\n")
        assert main(["run", "--config", config, "--out", str(tmp_path / "o")]) == 1
        assert "error" in capsys.readouterr().err

    def test_io_failure_nonzero_exit_no_partial_files(self, tmp_path, capsys):
        config = write(tmp_path, "c.yaml", SMALL_RUN_YAML)
        blocker = tmp_path / "blocked"
        blocker.write_text("a file where the output directory should go")
        assert main(["run", "--config", config, "--out", str(blocker)]) == 1
        assert "error" in capsys.readouterr().err
        assert blocker.is_file()
        assert not [p for p in os.listdir(tmp_path) if p.startswith(".tmp-")]

    def test_csv_roundtrip_exact(self, tmp_path, capsys):
        config = write(tmp_path, "c.yaml", SMALL_RUN_YAML)
        out = tmp_path / "out"
        main(["run", "--config", config, "--out", str(out)])
        from shiftlab.cli import parse_config as pc
        from shiftlab.harness import run_experiment

        records = run_experiment(pc(config))
        parsed = read_records_csv(str(out / "records.csv"))
        assert parsed == records

    def test_summary_reproducible_from_csv(self, tmp_path, capsys):
        config = write(tmp_path, "c.yaml", SMALL_RUN_YAML)
        out = tmp_path / "out"
        main(["run", "--config", config, "--out", str(out)])
        summary = json.loads((out / "summary.json").read_text())
        parsed = read_records_csv(str(out / "records.csv"))
        for cell in summary["cells"]:
            sel = [
                r.excess_risk
                for r in parsed
                if (r.scenario, r.estimator, r.n_min, r.n_maj)
                == (cell["scenario"], cell["estimator"], cell["n_min"], cell["n_maj"])
            ]
            assert len(sel) == cell["replications"]
            assert abs(float(np.mean(sel)) - cell["mean_excess_risk"]) < 1e-12


class TestCmdVerify:
    def test_default_passes(self, capsys):
        assert main(["verify", "--kmax", "8"]) == 0
        out = capsys.readouterr().out
        assert "checks passed" in out
        assert "hat_abs_integral" in out

    def test_report_contains_exact_constants(self, capsys):
        main(["verify", "--kmax", "1"])
        out = capsys.readouterr().out
        assert format(1.0 / 8.0, ".17g") in out  # 1/(8 K^2) at K = 1
        assert format(1.0 / 3.0, ".17g") in out  # 1/(3 K^3) at K = 1
        assert format(8.0 / 9.0, ".17g") in out

    def test_corrupted_tolerance_exits_one(self, capsys):
        assert main(["verify", "--kmax", "2", "--tolerance-scale", "0"]) == 1
        assert "FAILED" in capsys.readouterr().out


class TestCmdRates:
    def _write_records(self, tmp_path, rows):
        recs = [
            TrialRecord(
                scenario="label_shift",
                estimator="undersampled_binning",
                n_min=n,
                n_maj=4 * n,
                tau=None,
                k_bins=2,
                replication_id=i,
                seed_used=0,
                risk=0.5,
                bayes_risk=0.5 - v,
                excess_risk=v,
            )
            for n, vals in rows.items()
            for i, v in enumerate(vals)
        ]
        path = tmp_path / "records.csv"
        path.write_text(records_csv_text(recs))
        return str(path)

    def test_exact_power_law_slope_printed(self, tmp_path, capsys):
        path = self._write_records(
            tmp_path, {n: [n ** (-1.0 / 3.0)] for n in (10, 100, 1000)}
        )
        assert main(["rates", "--records", path]) == 0
        out = capsys.readouterr().out
        assert "slope=-0.333333" in out

    def test_bound_curve_includes_theorem_value(self, tmp_path, capsys):
        path = self._write_records(
            tmp_path, {n: [n ** (-1.0 / 3.0)] for n in (10, 100, 1000)}
        )
        main(["rates", "--records", path])
        out = capsys.readouterr().out
        assert format(1.0 / 6000.0, ".17g") in out

    def test_missing_column_named(self, tmp_path, capsys):
        path = self._write_records(tmp_path, {10: [0.1]})
        text = open(path).read().replace("excess_risk", "excess")
        open(path, "w").write(text)
        assert main(["rates", "--records", path]) == 1
        assert "excess_risk" in capsys.readouterr().err

    def test_malformed_row_named(self, tmp_path, capsys):
        path = self._write_records(tmp_path, {10: [0.1], 20: [0.2]})
        lines = open(path).read().splitlines()
        lines[2] = lines[2].replace("20,", "twenty,", 1)
        open(path, "w").write("\n".join(lines) + "\n")
        assert main(["rates", "--records", path]) == 1
        assert "row 3" in capsys.readouterr().err

    def test_json_output(self, tmp_path, capsys):
        path = self._write_records(
            tmp_path, {n: [n ** (-1.0 / 3.0)] for n in (10, 100, 1000)}
        )
        out_json = tmp_path / "rates.json"
        main(["rates", "--records", path, "--out", str(out_json)])
        payload = json.loads(out_json.read_text())
        assert abs(payload["rate_fits"][0]["slope"] + 1.0 / 3.0) < 1e-9
        assert payload["bound_curves"][-1]["lower_bound"] == 1.0 / 6000.0

    def test_custom_group_by(self, tmp_path, capsys):
        path = self._write_records(
            tmp_path, {n: [n ** (-1.0 / 3.0)] for n in (10, 100, 1000)}
        )
        assert main(["rates", "--records", path, "--group-by", "scenario,k_bins"]) == 0
        assert "k_bins=2" in capsys.readouterr().out
        assert main(["rates", "--records", path, "--group-by", "weekday"]) == 1
        assert "weekday" in capsys.readouterr().err

    def test_verify_default_kmax(self, capsys):
        assert main(["verify"]) == 0
        assert "K=16" in capsys.readouterr().out


class TestCmdSweep:
    def test_sweep_bundle(self, tmp_path, capsys):
        text = (
            "scenario: label_shift\nfamily_k: 2\nbase_n_min: 8\nbase_n_maj: 16\n"
            "factors: [1, 2]\nreplications: 4\nseed: 9\n"
        )
        config = write(tmp_path, "s.yaml", text)
        out = tmp_path / "out"
        assert main(["sweep", "--config", config, "--out", str(out)]) == 0
        rows = (out / "records.csv").read_text().splitlines()
        assert len(rows) == 3 * 2 * 4 + 1


class TestFloatFormatting:
    def test_seventeen_digit_roundtrip(self):
        values = [1 / 3, 1e-17, 0.1 + 0.2, math.pi, 5.772e-4]
        rec = TrialRecord(
            scenario="label_shift",
            estimator="undersampled_binning",
            n_min=1,
            n_maj=1,
            tau=None,
            k_bins=1,
            replication_id=0,
            seed_used=0,
            risk=values[2],
            bayes_risk=values[3] / 4,
            excess_risk=values[0],
        )
        text = records_csv_text([rec])
        row = text.splitlines()[1].split(",")
        assert float(row[8]) == rec.risk
        assert float(row[9]) == rec.bayes_risk
        assert float(row[10]) == rec.excess_risk


class TestSummarize:
    def test_empty(self):
        assert summarize([]) == {"cells": [], "rate_fits": [], "bound_curves": []}
