"""Monte Carlo experiment runner with reproducible seeding, plus the
deterministic verification suite for the closed-form constants.

Every (n_min, estimator, replication) cell owns an independent random stream
derived from the experiment seed and the cell coordinates, so results are a
pure function of the configuration: the same config and seed give identical
records whether cells run serially or across a process pool.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import estimators as est
from . import risk as risk_mod
from .instances import (
    GROUP_SHIFT,
    LABEL_SHIFT,
    GroupShiftIndex,
    ShiftInstance,
    draw_dataset,
    make_group_shift_hard,
    make_label_shift_hard,
    random_index,
)
from .piecewise import (
    PiecewiseLinearFn,
    hat_function,
    integrate_abs,
    kl_integral,
    overlap,
)

__all__ = [
    "ESTIMATOR_NAMES",
    "ExperimentConfig",
    "LemmaCheck",
    "LemmaReport",
    "RateFit",
    "RateUndefinedError",
    "SweepConfig",
    "TrialRecord",
    "fit_rate",
    "minority_majority_sweep",
    "run_experiment",
    "verify_lemmas",
]

ESTIMATOR_NAMES = (
    "undersampled_binning",
    "full_binning",
    "weighted_binning",
    "histogram_plugin",
    "posterior_oracle",
)

_SCENARIO_CODE = {LABEL_SHIFT: 0, GROUP_SHIFT: 1}
_ARM_NAMES = ("add_minority", "add_majority", "add_both")

# Context tags keep run_experiment and sweep streams disjoint.
_CTX_RUN, _CTX_SWEEP, _CTX_FIXED_INDEX = 0, 1, 2


@dataclass(frozen=True)
class ExperimentConfig:
    """One rate experiment: a grid of minority sizes crossed with estimators.

    ``rho`` sets ``n_maj = round(rho * n_min)`` (floored at ``n_min``);
    alternatively ``n_maj_grid`` pins majority sizes per grid point. The bin
    rule is either ``cube_root`` (``bin_multiplier * ceil(n_min ** (1/3))``)
    or ``fixed`` (``fixed_bins`` everywhere). ``index_mode`` draws a fresh
    hard-family index per replication or fixes one for the whole run.

    ``family_rule`` controls the scale of the hard family itself:
    ``fixed`` uses ``family_k`` bins everywhere, while ``match_bins`` builds
    each cell's instances at that cell's estimator bin count. Rate-recovery
    sweeps use ``match_bins``: it reproduces the minimax construction, where
    the hard instances live at the ``ceil(n_min ** (1/3))`` scale of the
    theorems. At a fixed family scale the binning estimator's excess risk
    plateaus near the family's per-bin separation instead of decaying.
    """

    scenario: str
    family_k: int
    n_min_grid: tuple[int, ...]
    seed: int
    estimators: tuple[str, ...] = ("undersampled_binning",)
    tau: float | None = None
    rho: float | None = None
    n_maj_grid: tuple[int, ...] | None = None
    replications: int = 100
    bin_rule: str = "cube_root"
    bin_multiplier: float = 1.0
    fixed_bins: int | None = None
    index_mode: str = "fresh"
    family_rule: str = "fixed"

    def validate(self) -> list[str]:
        """All contract violations, as human-readable strings (empty if valid)."""
        errs: list[str] = []
        if self.scenario not in _SCENARIO_CODE:
            errs.append(f"scenario must be one of {sorted(_SCENARIO_CODE)}, got {self.scenario!r}")
        if not isinstance(self.family_k, int) or self.family_k < 1:
            errs.append(f"family_k must be a positive integer, got {self.family_k!r}")
        if not self.n_min_grid:
            errs.append("n_min_grid must be nonempty")
        elif any((not isinstance(n, int)) or n < 1 for n in self.n_min_grid):
            errs.append(f"n_min_grid entries must be positive integers, got {self.n_min_grid}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            errs.append(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.scenario == GROUP_SHIFT:
            if self.tau is None:
                errs.append("group_shift requires tau")
            elif not 0.0 <= self.tau <= 1.0:
                errs.append(f"tau must be in [0, 1], got {self.tau}")
        elif self.tau is not None:
            errs.append("tau is only meaningful for group_shift")
        if self.rho is not None and self.n_maj_grid is not None:
            errs.append("give rho or n_maj_grid, not both")
        if self.rho is not None and self.rho <= 0:
            errs.append(f"rho must be positive, got {self.rho}")
        if self.n_maj_grid is not None:
            if len(self.n_maj_grid) != len(self.n_min_grid):
                errs.append("n_maj_grid must match n_min_grid in length")
            elif any(
                m < n for m, n in zip(self.n_maj_grid, self.n_min_grid)
            ):
                errs.append("every n_maj must be >= the matching n_min")
        unknown = [name for name in self.estimators if name not in ESTIMATOR_NAMES]
        if unknown:
            errs.append(f"unknown estimators {unknown}; known: {list(ESTIMATOR_NAMES)}")
        if not self.estimators:
            errs.append("estimators must be nonempty")
        if not isinstance(self.replications, int) or self.replications < 1:
            errs.append(f"replications must be a positive integer, got {self.replications!r}")
        if self.bin_rule not in ("cube_root", "fixed"):
            errs.append(f"bin_rule must be 'cube_root' or 'fixed', got {self.bin_rule!r}")
        if self.bin_rule == "fixed" and (self.fixed_bins is None or self.fixed_bins < 1):
            errs.append("bin_rule 'fixed' requires a positive fixed_bins")
        if self.bin_rule == "cube_root" and self.bin_multiplier <= 0:
            errs.append(f"bin_multiplier must be positive, got {self.bin_multiplier}")
        if self.index_mode not in ("fresh", "fixed"):
            errs.append(f"index_mode must be 'fresh' or 'fixed', got {self.index_mode!r}")
        if self.family_rule not in ("fixed", "match_bins"):
            errs.append(
                f"family_rule must be 'fixed' or 'match_bins', got {self.family_rule!r}"
            )
        return errs

    def n_maj_for(self, i: int) -> int:
        if self.n_maj_grid is not None:
            return self.n_maj_grid[i]
        rho = self.rho if self.rho is not None else 2.0
        return max(self.n_min_grid[i], int(round(rho * self.n_min_grid[i])))


@dataclass(frozen=True)
class SweepConfig:
    """Figure-style arms: grow the minority, the majority, or both by the
    given factors from a common base point."""

    scenario: str
    family_k: int
    base_n_min: int
    base_n_maj: int
    factors: tuple[int, ...]
    seed: int
    arms: tuple[str, ...] = _ARM_NAMES
    estimators: tuple[str, ...] = ("undersampled_binning",)
    tau: float | None = None
    replications: int = 100
    bin_rule: str = "cube_root"
    bin_multiplier: float = 1.0
    fixed_bins: int | None = None
    index_mode: str = "fresh"
    family_rule: str = "fixed"

    def validate(self) -> list[str]:
        errs: list[str] = []
        base = ExperimentConfig(
            scenario=self.scenario,
            family_k=self.family_k,
            n_min_grid=(self.base_n_min,) if self.base_n_min >= 1 else (),
            seed=self.seed,
            estimators=self.estimators,
            tau=self.tau,
            replications=self.replications,
            bin_rule=self.bin_rule,
            bin_multiplier=self.bin_multiplier,
            fixed_bins=self.fixed_bins,
            index_mode=self.index_mode,
            family_rule=self.family_rule,
        )
        errs.extend(e for e in base.validate() if "n_min_grid" not in e)
        if self.base_n_min < 1 or self.base_n_maj < self.base_n_min:
            errs.append(
                f"need base_n_maj >= base_n_min >= 1, got ({self.base_n_maj}, {self.base_n_min})"
            )
        if not self.factors or any((not isinstance(f, int)) or f < 1 for f in self.factors):
            errs.append(f"factors must be positive integers, got {self.factors}")
        unknown = [a for a in self.arms if a not in _ARM_NAMES]
        if unknown:
            errs.append(f"unknown arms {unknown}; known: {list(_ARM_NAMES)}")
        for arm in self.arms:
            if arm not in _ARM_NAMES:
                continue
            for f in self.factors:
                n_min, n_maj = _arm_sizes(arm, self.base_n_min, self.base_n_maj, f)
                if n_maj < n_min:
                    errs.append(f"arm {arm} at factor {f} gives n_min {n_min} > n_maj {n_maj}")
        return errs


@dataclass(frozen=True)
class TrialRecord:
    """One Monte Carlo replication: exact risks of one fitted classifier."""

    scenario: str
    estimator: str
    n_min: int
    n_maj: int
    tau: float | None
    k_bins: int
    replication_id: int
    seed_used: int
    risk: float
    bayes_risk: float
    excess_risk: float
    wall_time_seconds: float = 0.0


@dataclass(frozen=True)
class RateFit:
    """OLS fit of log mean excess risk against log n_min."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int


class RateUndefinedError(ValueError):
    """A rate fit was requested on means that are not all positive."""


def _arm_sizes(arm: str, base_n_min: int, base_n_maj: int, factor: int) -> tuple[int, int]:
    if arm == "add_minority":
        return base_n_min * factor, base_n_maj
    if arm == "add_majority":
        return base_n_min, base_n_maj * factor
    return base_n_min * factor, base_n_maj * factor


def _grid_bins(cfg, n_min: int) -> int:
    if cfg.bin_rule == "fixed":
        return cfg.fixed_bins
    return est.cube_root_bins(n_min, cfg.bin_multiplier)


def _family_k_for(cfg, n_min: int) -> int:
    return cfg.family_k if cfg.family_rule == "fixed" else _grid_bins(cfg, n_min)


def _fixed_instance(cfg, family_k: int) -> ShiftInstance:
    rng = np.random.default_rng(
        np.random.SeedSequence(
            [cfg.seed, _CTX_FIXED_INDEX, _SCENARIO_CODE[cfg.scenario], family_k]
        )
    )
    return _instance_from_index(
        cfg.scenario, random_index(cfg.scenario, family_k, rng, tau=cfg.tau)
    )


def _instance_from_index(scenario: str, index) -> ShiftInstance:
    if scenario == LABEL_SHIFT:
        return make_label_shift_hard(index)
    return make_group_shift_hard(index)


def _fit_classifier(name: str, data, k_bins: int, rng, cfg, family_k: int):
    if name == "undersampled_binning":
        model = est.UndersampledBinningClassifier(n_bins=k_bins, random_state=rng)
    elif name == "full_binning":
        model = est.FullBinningClassifier(n_bins=k_bins)
    elif name == "weighted_binning":
        model = est.WeightedBinningClassifier(n_bins=k_bins)
    elif name == "histogram_plugin":
        model = est.HistogramPluginClassifier(n_bins=k_bins, random_state=rng)
    elif name == "posterior_oracle":
        model = est.PosteriorOracleClassifier(family_k=family_k, scenario=cfg.scenario)
    else:
        raise ValueError(f"unknown estimator {name!r}")
    model.fit(data.x, data.y, data.group)
    return model.classifier_


def _simulate_cell(cfg, ctx: int, coords: Sequence[int], n_min: int, n_maj: int, estimator: str):
    """All replications of one configuration cell, on an isolated rng stream."""
    family_k = _family_k_for(cfg, n_min)
    k_bins = family_k if estimator == "posterior_oracle" else _grid_bins(cfg, n_min)
    fixed = _fixed_instance(cfg, family_k) if cfg.index_mode == "fixed" else None
    records = []
    for rep in range(cfg.replications):
        ss = np.random.SeedSequence([cfg.seed, ctx, *coords, rep])
        rng = np.random.default_rng(ss)
        seed_used = int(ss.generate_state(1, np.uint64)[0])
        if fixed is not None:
            instance = fixed
        else:
            instance = _instance_from_index(
                cfg.scenario, random_index(cfg.scenario, family_k, rng, tau=cfg.tau)
            )
        data = draw_dataset(instance, n_maj, n_min, rng)
        clf = _fit_classifier(estimator, data, k_bins, rng, cfg, family_k)
        report = risk_mod.excess_risk(clf, instance)
        records.append(
            TrialRecord(
                scenario=cfg.scenario,
                estimator=estimator,
                n_min=n_min,
                n_maj=n_maj,
                tau=cfg.tau,
                k_bins=k_bins,
                replication_id=rep,
                seed_used=seed_used,
                risk=report.risk,
                bayes_risk=report.bayes_risk,
                excess_risk=report.excess_risk,
            )
        )
    return records


def _cell_task(args):
    return _simulate_cell(*args)


def _run_cells(tasks, threads: int) -> list[TrialRecord]:
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_cell_task, tasks))
    else:
        chunks = [_cell_task(t) for t in tasks]
    return [record for chunk in chunks for record in chunk]


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[TrialRecord]:
    """Run every (n_min, estimator, replication) cell of the configuration.

    Records come back sorted by grid position, estimator order, then
    replication id, independent of ``threads``.
    """
    problems = cfg.validate()
    if problems:
        raise ValueError("invalid experiment config: " + "; ".join(problems))
    tasks = []
    for i, n_min in enumerate(cfg.n_min_grid):
        n_maj = cfg.n_maj_for(i)
        for e, name in enumerate(cfg.estimators):
            coords = (_SCENARIO_CODE[cfg.scenario], n_min, n_maj, e)
            tasks.append((cfg, _CTX_RUN, coords, n_min, n_maj, name))
    return _run_cells(tasks, threads)


def minority_majority_sweep(cfg: SweepConfig, threads: int = 1) -> list[TrialRecord]:
    """Run the add-minority / add-majority / add-both arms of a sweep.

    Each (arm, factor, estimator) cell gets its own stream, so arms are
    statistically independent even where their sample sizes coincide.
    Records are ordered by arm, factor, estimator, replication.
    """
    problems = cfg.validate()
    if problems:
        raise ValueError("invalid sweep config: " + "; ".join(problems))
    run_cfg = ExperimentConfig(
        scenario=cfg.scenario,
        family_k=cfg.family_k,
        n_min_grid=(cfg.base_n_min,),
        seed=cfg.seed,
        estimators=cfg.estimators,
        tau=cfg.tau,
        replications=cfg.replications,
        bin_rule=cfg.bin_rule,
        bin_multiplier=cfg.bin_multiplier,
        fixed_bins=cfg.fixed_bins,
        index_mode=cfg.index_mode,
        family_rule=cfg.family_rule,
    )
    tasks = []
    for a, arm in enumerate(cfg.arms):
        for f in cfg.factors:
            n_min, n_maj = _arm_sizes(arm, cfg.base_n_min, cfg.base_n_maj, f)
            for e, name in enumerate(cfg.estimators):
                coords = (_SCENARIO_CODE[cfg.scenario], _ARM_NAMES.index(arm), f, n_min, n_maj, e)
                tasks.append((run_cfg, _CTX_SWEEP, coords, n_min, n_maj, name))
    return _run_cells(tasks, threads)


def fit_rate(records: Sequence[TrialRecord]) -> RateFit:
    """Least squares of log mean excess risk on log n_min.

    Records are grouped by ``n_min`` and averaged first. Requires at least
    three distinct grid points, all with strictly positive mean excess risk;
    otherwise raises :class:`RateUndefinedError` naming the offenders.
    """
    by_n: dict[int, list[float]] = {}
    for r in records:
        by_n.setdefault(r.n_min, []).append(r.excess_risk)
    if len(by_n) < 3:
        raise RateUndefinedError(
            f"need at least 3 distinct n_min values, got {sorted(by_n)}"
        )
    ns = np.array(sorted(by_n))
    means = np.array([np.mean(by_n[n]) for n in ns])
    bad = ns[means <= 0.0]
    if bad.size:
        raise RateUndefinedError(
            f"mean excess risk not positive at n_min in {bad.tolist()}; rate undefined"
        )
    lx, ly = np.log(ns.astype(float)), np.log(means)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 and ss_res == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(float(slope), float(intercept), min(1.0, r2), len(ns))


@dataclass(frozen=True)
class LemmaCheck:
    """One deterministic constant check: measured value against its target."""

    name: str
    params: str
    expected: float
    actual: float
    delta: float
    tol: float
    passed: bool
    kind: str = "equals"  # or "at_most" / "in_range"


@dataclass(frozen=True)
class LemmaReport:
    checks: tuple[LemmaCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_abs_delta(self) -> float:
        return max(abs(c.delta) for c in self.checks)

    def failures(self) -> list[LemmaCheck]:
        return [c for c in self.checks if not c.passed]

    def to_text(self) -> str:
        lines = [
            f"{'check':<28}{'params':<12}{'expected':>24}{'actual':>24}{'delta':>12}  status"
        ]
        for c in self.checks:
            lines.append(
                f"{c.name:<28}{c.params:<12}{c.expected:>24.17g}{c.actual:>24.17g}"
                f"{c.delta:>12.3g}  {'ok' if c.passed else 'FAIL'}"
            )
        return "\n".join(lines)


def _one_bin_perturbations(k: int) -> tuple[PiecewiseLinearFn, PiecewiseLinearFn]:
    """``1 + hat`` and ``1 - hat`` translated onto the first bin [0, 1/k]."""
    phi = hat_function(k).shifted(1.0 / (2.0 * k))
    return (
        PiecewiseLinearFn(phi.xs, 1.0 + phi.ys),
        PiecewiseLinearFn(phi.xs, 1.0 - phi.ys),
    )


def trit_gap_expectation() -> Fraction:
    """``E |V1 - V2|`` for independent uniform trits, by exact enumeration."""
    return Fraction(
        sum(abs(a - b) for a in (-1, 0, 1) for b in (-1, 0, 1)), 9
    )


def family_average_bayes_risk_label_shift(k: int) -> float:
    """Family-average Bayes risk of the k-bin hard label-shift family.

    Per bin, averages the exact TV contribution over the 9 equiprobable trit
    pairs; bins are exchangeable so the family TV is k times that, and the
    Bayes risk is ``(1 - E TV) / 2``.
    """
    phi = hat_function(k)
    abs_phi = integrate_abs(phi, *phi.support)
    per_bin = np.mean(
        [0.5 * abs(a - b) * abs_phi for a in (-1, 0, 1) for b in (-1, 0, 1)]
    )
    return 0.5 * (1.0 - k * per_bin)


def verify_lemmas(k_max: int = 16, tolerance_scale: float = 1.0) -> LemmaReport:
    """Deterministic verification of every checkable closed-form constant.

    Covers the hat-function absolute integral ``1/(8 k^2)``, the two one-bin
    KL integrals against their ``1/(3 k^3)`` cap, the exact 8/9 trit-gap
    expectation, the family-average label-shift Bayes risk
    ``(1/2)(1 - 1/(18 k))``, and the overlap of the step group marginals.
    ``tolerance_scale`` shrinks every tolerance (a hook for exercising the
    failure path).
    """
    if k_max < 1:
        raise ValueError("k_max must be a positive integer")
    checks: list[LemmaCheck] = []

    def equals(name, params, expected, actual, tol):
        delta = actual - expected
        tol = tol * tolerance_scale
        checks.append(LemmaCheck(name, params, expected, actual, delta, tol, abs(delta) <= tol))

    def in_range(name, params, upper, actual, tol):
        tol = tol * tolerance_scale
        violation = max(0.0, actual - (upper + tol), -actual - tol)
        checks.append(
            LemmaCheck(name, params, upper, actual, violation, tol, violation == 0.0, "in_range")
        )

    for k in range(1, k_max + 1):
        phi = hat_function(k)
        equals(
            "hat_abs_integral",
            f"K={k}",
            1.0 / (8.0 * k * k),
            integrate_abs(phi, *phi.support),
            1e-12,
        )
    for k in range(1, k_max + 1):
        plus, minus = _one_bin_perturbations(k)
        cap = 1.0 / (3.0 * k**3)
        in_range("kl_one_bin_plus", f"K={k}", cap, kl_integral(plus, minus, 0.0, 1.0 / k), 1e-12)
        in_range("kl_one_bin_minus", f"K={k}", cap, kl_integral(minus, plus, 0.0, 1.0 / k), 1e-12)

    equals("trit_gap_expectation", "9 cells", float(Fraction(8, 9)), float(trit_gap_expectation()), 0.0)

    for k in range(1, min(k_max, 16) + 1):
        equals(
            "family_bayes_risk",
            f"K={k}",
            0.5 * (1.0 - 1.0 / (18.0 * k)),
            family_average_bayes_risk_label_shift(k),
            1e-12,
        )

    for i in range(11):
        tau = i / 10.0
        inst = make_group_shift_hard(GroupShiftIndex((1,) * 4, tau))
        equals("step_overlap", f"tau={tau:.1f}", tau, overlap(inst.p_maj, inst.p_min), 1e-9)

    return LemmaReport(tuple(checks))


def envelope_constant(records: Sequence[TrialRecord]) -> float:
    """Constant C with ``mean excess <= C * n_min**(-1/3)`` pinned at the
    smallest grid point."""
    by_n: dict[int, list[float]] = {}
    for r in records:
        by_n.setdefault(r.n_min, []).append(r.excess_risk)
    n0 = min(by_n)
    return float(np.mean(by_n[n0])) * n0 ** (1.0 / 3.0)
