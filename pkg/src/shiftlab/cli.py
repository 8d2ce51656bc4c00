"""Command-line front end: config parsing, subcommand dispatch, and
bit-stable emission of records, summaries and verification reports.

Subcommands
-----------
run     Execute an experiment config; write records.csv, summary.json and
        manifest.json into the output directory.
sweep   Execute an add-minority / add-majority / add-both sweep config.
verify  Run the deterministic constant-verification suite; exit 0 iff all
        checks pass.
rates   Fit log-log convergence rates from an existing records.csv and print
        the matching theoretical lower-bound curves.

All floats in records.csv are written with 17 significant digits so parsing
them back reproduces the in-memory doubles exactly. Outputs are written via
temp-file-and-rename, so partial results never masquerade as complete runs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict

import numpy as np
import yaml

from . import __version__
from .harness import (
    ExperimentConfig,
    RateUndefinedError,
    SweepConfig,
    TrialRecord,
    fit_rate,
    minority_majority_sweep,
    run_experiment,
    verify_lemmas,
)
from .instances import LABEL_SHIFT
from .risk import lower_bound_group_shift, lower_bound_label_shift

__all__ = [
    "CSV_COLUMNS",
    "ConfigError",
    "main",
    "parse_config",
    "parse_sweep_config",
    "read_records_csv",
    "records_csv_text",
    "summarize",
]

CSV_COLUMNS = (
    "scenario",
    "estimator",
    "n_min",
    "n_maj",
    "tau",
    "K_bins",
    "replication_id",
    "seed_used",
    "risk",
    "bayes_risk",
    "excess_risk",
    "wall_time_seconds",
)

_RUN_KEYS = {
    "scenario",
    "family_k",
    "n_min_grid",
    "seed",
    "estimators",
    "tau",
    "rho",
    "n_maj_grid",
    "replications",
    "bin_rule",
    "bin_multiplier",
    "fixed_bins",
    "index_mode",
    "family_rule",
}
_SWEEP_KEYS = {
    "scenario",
    "family_k",
    "base_n_min",
    "base_n_maj",
    "factors",
    "seed",
    "arms",
    "estimators",
    "tau",
    "replications",
    "bin_rule",
    "bin_multiplier",
    "fixed_bins",
    "index_mode",
    "family_rule",
}


class ConfigError(ValueError):
    """Aggregated configuration problems; the message names every violation."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _load_mapping(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not well-formed: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a key-value mapping")
    return raw


def _build_config(raw: dict, allowed: set[str], required: tuple[str, ...], cls):
    errs = [f"unknown key {k!r}" for k in sorted(set(raw) - allowed)]
    missing = [k for k in required if k not in raw]
    errs += [f"missing required key {k!r}" for k in missing]
    kwargs = {}
    for key, value in raw.items():
        if key not in allowed:
            continue
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    if not missing:
        try:
            cfg = cls(**kwargs)
            errs += cfg.validate()
            if not errs:
                return cfg
        except (TypeError, ValueError) as e:
            errs.append(str(e))
    raise ConfigError("config errors: " + "; ".join(errs))


def parse_config(path: str, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and validate a run config (YAML or JSON key-value tree).

    Every violation is collected into a single :class:`ConfigError` message.
    Defaults: ``estimators=[undersampled_binning]``, ``rho=2``,
    ``replications=100``, ``bin_rule=cube_root`` with multiplier 1, and
    ``index_mode=fresh``.
    """
    raw = _load_mapping(path)
    if seed_override is not None:
        raw["seed"] = seed_override
    return _build_config(raw, _RUN_KEYS, ("scenario", "family_k", "n_min_grid", "seed"), ExperimentConfig)


def parse_sweep_config(path: str, seed_override: int | None = None) -> SweepConfig:
    raw = _load_mapping(path)
    if seed_override is not None:
        raw["seed"] = seed_override
    required = ("scenario", "family_k", "base_n_min", "base_n_maj", "factors", "seed")
    return _build_config(raw, _SWEEP_KEYS, required, SweepConfig)


def records_csv_text(records: list[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(
            (
                r.scenario,
                r.estimator,
                r.n_min,
                r.n_maj,
                "" if r.tau is None else _fmt(r.tau),
                r.k_bins,
                r.replication_id,
                r.seed_used,
                _fmt(r.risk),
                _fmt(r.bayes_risk),
                _fmt(r.excess_risk),
                _fmt(r.wall_time_seconds),
            )
        )
    return buf.getvalue()


def read_records_csv(path: str) -> list[TrialRecord]:
    """Parse a records.csv, reporting the offending row or column on failure."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"records file {path} is missing columns: {', '.join(missing)}")
        for i, row in enumerate(reader, start=2):
            try:
                records.append(
                    TrialRecord(
                        scenario=row["scenario"],
                        estimator=row["estimator"],
                        n_min=int(row["n_min"]),
                        n_maj=int(row["n_maj"]),
                        tau=None if row["tau"] == "" else float(row["tau"]),
                        k_bins=int(row["K_bins"]),
                        replication_id=int(row["replication_id"]),
                        seed_used=int(row["seed_used"]),
                        risk=float(row["risk"]),
                        bayes_risk=float(row["bayes_risk"]),
                        excess_risk=float(row["excess_risk"]),
                        wall_time_seconds=float(row["wall_time_seconds"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"records file {path}, row {i}: {e}")
    return records


def _group_key(r: TrialRecord) -> tuple:
    return (r.scenario, r.estimator, r.tau)


def summarize(records: list[TrialRecord]) -> dict:
    """Per-cell means with standard errors, rate fits per estimator group,
    and the theoretical lower-bound curve on the same grid."""
    cells: dict[tuple, list[TrialRecord]] = {}
    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        cells.setdefault((r.scenario, r.estimator, r.tau, r.n_min, r.n_maj, r.k_bins), []).append(r)
        groups.setdefault(_group_key(r), []).append(r)

    def mean_se(values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values)
        se = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
        return float(arr.mean()), se

    cell_rows = []
    for key in sorted(cells, key=lambda k: (k[0], k[1], k[2] if k[2] is not None else -1.0, k[3], k[4])):
        scenario, estimator, tau, n_min, n_maj, k_bins = key
        rs = cells[key]
        mean_excess, se_excess = mean_se([r.excess_risk for r in rs])
        mean_risk, _ = mean_se([r.risk for r in rs])
        mean_bayes, _ = mean_se([r.bayes_risk for r in rs])
        cell_rows.append(
            {
                "scenario": scenario,
                "estimator": estimator,
                "tau": tau,
                "n_min": n_min,
                "n_maj": n_maj,
                "k_bins": k_bins,
                "replications": len(rs),
                "mean_excess_risk": mean_excess,
                "se_excess_risk": se_excess,
                "mean_risk": mean_risk,
                "mean_bayes_risk": mean_bayes,
            }
        )

    rate_rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2] if k[2] is not None else -1.0)):
        scenario, estimator, tau = key
        entry = {"scenario": scenario, "estimator": estimator, "tau": tau}
        try:
            fit = fit_rate(groups[key])
            entry.update(
                slope=fit.slope,
                intercept=fit.intercept,
                r_squared=fit.r_squared,
                n_points=fit.n_points,
            )
        except RateUndefinedError as e:
            entry["error"] = str(e)
        rate_rows.append(entry)

    bound_rows = []
    seen = set()
    for r in sorted(records, key=lambda r: (r.scenario, r.n_min, r.n_maj)):
        key = (r.scenario, r.tau, r.n_min, r.n_maj)
        if key in seen:
            continue
        seen.add(key)
        if r.scenario == LABEL_SHIFT:
            value = lower_bound_label_shift(r.n_min)
        else:
            value = lower_bound_group_shift(r.n_min, r.n_maj, r.tau)
        bound_rows.append(
            {
                "scenario": r.scenario,
                "tau": r.tau,
                "n_min": r.n_min,
                "n_maj": r.n_maj,
                "lower_bound": value,
            }
        )

    return {"cells": cell_rows, "rate_fits": rate_rows, "bound_curves": bound_rows}


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_bundle(out_dir: str, records: list[TrialRecord], manifest: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write(os.path.join(out_dir, "records.csv"), records_csv_text(records))
    _atomic_write(
        os.path.join(out_dir, "summary.json"),
        json.dumps(summarize(records), indent=2, sort_keys=True) + "\n",
    )
    _atomic_write(
        os.path.join(out_dir, "manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _manifest(cfg) -> dict:
    return {"tool": "shiftlab", "version": __version__, "seed": cfg.seed, "config": asdict(cfg)}


def _cmd_run(args) -> int:
    cfg = parse_config(args.config, args.seed)
    started = time.perf_counter()
    records = run_experiment(cfg, threads=args.threads)
    elapsed = time.perf_counter() - started
    _write_bundle(args.out, records, _manifest(cfg))
    print(f"wrote {len(records)} records to {args.out} in {elapsed:.1f}s")
    return 0


def _cmd_sweep(args) -> int:
    cfg = parse_sweep_config(args.config, args.seed)
    started = time.perf_counter()
    records = minority_majority_sweep(cfg, threads=args.threads)
    elapsed = time.perf_counter() - started
    _write_bundle(args.out, records, _manifest(cfg))
    print(f"wrote {len(records)} records to {args.out} in {elapsed:.1f}s")
    return 0


def _cmd_verify(args) -> int:
    report = verify_lemmas(args.kmax, tolerance_scale=args.tolerance_scale)
    print(report.to_text())
    if report.all_passed:
        print(f"all {len(report.checks)} checks passed (max |delta| = {report.max_abs_delta:.3g})")
        return 0
    failures = report.failures()
    print(f"{len(failures)} checks FAILED:")
    for c in failures:
        print(f"  {c.name} {c.params}: delta={c.delta:.17g} exceeds tol={c.tol:.3g}")
    return 1


_GROUPABLE = ("scenario", "estimator", "tau", "n_maj", "k_bins")


def _cmd_rates(args) -> int:
    records = read_records_csv(args.records)
    if not records:
        raise ValueError(f"records file {args.records} has no rows")
    columns = [c.strip() for c in args.group_by.split(",") if c.strip()]
    unknown = [c for c in columns if c not in _GROUPABLE]
    if unknown:
        raise ValueError(f"cannot group by {unknown}; known columns: {list(_GROUPABLE)}")
    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        key = tuple(getattr(r, c) for c in columns)
        groups.setdefault(key, []).append(r)
    out_payload = {"rate_fits": [], "bound_curves": []}

    def sortable(key):
        return tuple(-1.0 if v is None else v for v in key)

    for key in sorted(groups, key=sortable):
        labels = dict(zip(columns, key))
        tag = " ".join(f"{c}={'-' if v is None else v}" for c, v in labels.items())
        entry = {c: labels[c] for c in columns}
        try:
            fit = fit_rate(groups[key])
        except RateUndefinedError as e:
            print(f"{tag} rate undefined: {e}")
            out_payload["rate_fits"].append({**entry, "error": str(e)})
            continue
        print(
            f"{tag} slope={fit.slope:.6f} intercept={fit.intercept:.6f} "
            f"r_squared={fit.r_squared:.6f} n_points={fit.n_points}"
        )
        out_payload["rate_fits"].append(
            {
                **entry,
                "slope": fit.slope,
                "intercept": fit.intercept,
                "r_squared": fit.r_squared,
                "n_points": fit.n_points,
            }
        )
    seen = set()
    for r in sorted(records, key=lambda r: (r.scenario, r.n_min, r.n_maj)):
        key = (r.scenario, r.tau, r.n_min, r.n_maj)
        if key in seen:
            continue
        seen.add(key)
        if r.scenario == LABEL_SHIFT:
            value = lower_bound_label_shift(r.n_min)
        else:
            value = lower_bound_group_shift(r.n_min, r.n_maj, r.tau)
        print(
            f"bound scenario={r.scenario} tau={'-' if r.tau is None else r.tau} "
            f"n_min={r.n_min} n_maj={r.n_maj} value={_fmt(value)}"
        )
        out_payload["bound_curves"].append(
            {"scenario": r.scenario, "tau": r.tau, "n_min": r.n_min, "n_maj": r.n_maj, "lower_bound": value}
        )
    if args.out:
        _atomic_write(args.out, json.dumps(out_payload, indent=2, sort_keys=True) + "\n")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftlab",
        description="Distribution-shift simulation: hard families, binning estimators, exact risks.",
    )
    parser.add_argument("--version", action="version", version=f"shiftlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True, help="YAML/JSON experiment config")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="run an add-minority/add-majority/add-both sweep")
    sweep.add_argument("--config", required=True, help="YAML/JSON sweep config")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.add_argument("--threads", type=int, default=1)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.set_defaults(func=_cmd_sweep)

    verify = sub.add_parser("verify", help="verify the closed-form constants")
    verify.add_argument("--kmax", type=int, default=16, help="largest bin count checked")
    verify.add_argument("--tolerance-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    verify.set_defaults(func=_cmd_verify)

    rates = sub.add_parser("rates", help="fit log-log rates from a records.csv")
    rates.add_argument("--records", required=True, help="path to records.csv")
    rates.add_argument(
        "--group-by",
        default="scenario,estimator,tau",
        help=f"comma-separated grouping columns from {', '.join(_GROUPABLE)}",
    )
    rates.add_argument("--out", default=None, help="optional JSON output path")
    rates.set_defaults(func=_cmd_rates)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
