"""Binning classifiers on the unit interval and the family-posterior oracle.

All estimators follow the scikit-learn protocol: hyperparameters go to
``__init__``, data goes to ``fit(X, y, group)``, and predictions come from
``predict(X)``. ``X`` holds scalar features in [0, 1] (shape ``(n,)`` or
``(n, 1)``), ``y`` holds labels in {-1, +1} and ``group`` marks each sample
as majority (0) or minority (1). Every fitted estimator exposes its decision
rule as ``classifier_``, a :class:`~shiftlab.piecewise.PiecewiseConstantClassifier`.

Ties are broken identically everywhere: a bin votes +1 only when the +1 mass
strictly exceeds the -1 mass, so empty bins and exact ties predict -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .instances import (
    MAJORITY,
    MINORITY,
    GROUP_SHIFT,
    LABEL_SHIFT,
    Dataset,
    bin_index,
    hat_offset_values,
    undersample,
)
from .piecewise import PiecewiseConstantClassifier

__all__ = [
    "FamilyPosterior",
    "FullBinningClassifier",
    "HistogramDensityPair",
    "HistogramPluginClassifier",
    "InsufficientDataError",
    "PosteriorOracleClassifier",
    "UndersampledBinningClassifier",
    "WeightedBinningClassifier",
    "WrongScenarioError",
    "ceil_cube_root",
    "check_features",
    "check_training_set",
    "compute_family_posterior",
    "cube_root_bins",
    "posterior_oracle_classifier",
]

#: Ordered trit-pair cells of a per-bin label-shift posterior table:
#: cell ``3 * (v1 + 1) + (vm1 + 1)`` is the pair ``(v1, vm1)``.
_TRITS = (-1, 0, 1)
LABEL_SHIFT_CELLS = tuple((a, b) for a in _TRITS for b in _TRITS)
GROUP_SHIFT_CELLS = (-1, 1)


class InsufficientDataError(ValueError):
    """The dataset cannot support the requested fit (e.g. no minority samples)."""


class WrongScenarioError(ValueError):
    """The dataset does not match the scenario the estimator expects."""


def ceil_cube_root(n: int) -> int:
    """Smallest integer k with k**3 >= n (exact, no floating cube roots)."""
    if n < 1:
        raise ValueError("n must be positive")
    k = max(1, int(round(n ** (1.0 / 3.0))))
    while k**3 < n:
        k += 1
    while k > 1 and (k - 1) ** 3 >= n:
        k -= 1
    return k


def cube_root_bins(n_min: int, multiplier: float = 1.0) -> int:
    """Bin count ``c * ceil(n_min ** (1/3))`` rounded to a positive integer."""
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    return max(1, int(round(multiplier * ceil_cube_root(n_min))))


def check_features(X) -> np.ndarray:
    """Validate features: 1-d (or single-column 2-d) array with values in [0, 1]."""
    x = np.asarray(X, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError(f"expected scalar features, got array of shape {np.shape(X)}")
    if x.size and (np.min(x) < 0.0 or np.max(x) > 1.0):
        raise ValueError("features must lie in [0, 1]")
    return x


def check_training_set(X, y, group) -> Dataset:
    """Validate a training triple and pack it into a :class:`Dataset`."""
    x = check_features(X)
    return Dataset(x, np.asarray(y), np.asarray(group))


def _bin_counts(x, y, k: int) -> tuple[np.ndarray, np.ndarray]:
    idx = bin_index(k, x)
    n_pos = np.bincount(idx[y > 0], minlength=k)
    n_neg = np.bincount(idx[y < 0], minlength=k)
    return n_pos, n_neg


def _bin_classifier(k: int, positive: np.ndarray) -> PiecewiseConstantClassifier:
    labels = np.where(positive, 1, -1)
    return PiecewiseConstantClassifier(np.linspace(0.0, 1.0, k + 1), labels)


class _BinnedClassifierBase(BaseEstimator, ClassifierMixin):
    """Shared plumbing: bin-count resolution, prediction, fitted checks."""

    def _resolve_bins(self, data: Dataset) -> int:
        if self.n_bins is not None:
            if self.n_bins < 1:
                raise ValueError("n_bins must be a positive integer")
            return int(self.n_bins)
        return ceil_cube_root(max(1, data.n_min))

    def _set_fitted(self, classifier: PiecewiseConstantClassifier, n_bins: int) -> None:
        self.classifier_ = classifier
        self.n_bins_ = n_bins
        self.classes_ = np.array([-1, 1])

    def predict(self, X):
        if not hasattr(self, "classifier_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")
        return np.asarray(self.classifier_(check_features(X)))


class UndersampledBinningClassifier(_BinnedClassifierBase):
    """Majority vote over equal-width bins, after balancing the groups.

    The fit first discards excess majority samples (uniformly, without
    replacement) so both groups contribute ``n_min`` points, then labels each
    bin by its majority vote. ``n_bins=None`` applies the rate-optimal rule
    ``ceil(n_min ** (1/3))``.
    """

    def __init__(self, n_bins: int | None = None, random_state=None):
        self.n_bins = n_bins
        self.random_state = random_state

    def fit(self, X, y, group):
        data = check_training_set(X, y, group)
        if data.n_min == 0:
            raise InsufficientDataError("undersampled binning needs minority samples")
        rng = np.random.default_rng(self.random_state)
        balanced = undersample(data, rng)
        k = self._resolve_bins(data)
        n_pos, n_neg = _bin_counts(balanced.x, balanced.y, k)
        self._set_fitted(_bin_classifier(k, n_pos > n_neg), k)
        return self


class FullBinningClassifier(_BinnedClassifierBase):
    """Per-bin majority vote over the full (unbalanced) dataset."""

    def __init__(self, n_bins: int | None = None):
        self.n_bins = n_bins

    def fit(self, X, y, group):
        data = check_training_set(X, y, group)
        if len(data) == 0:
            raise InsufficientDataError("cannot fit on an empty dataset")
        k = self._resolve_bins(data)
        n_pos, n_neg = _bin_counts(data.x, data.y, k)
        self._set_fitted(_bin_classifier(k, n_pos > n_neg), k)
        return self


class WeightedBinningClassifier(_BinnedClassifierBase):
    """Importance-weighted per-bin vote over the full dataset.

    Each minority sample counts with weight ``rho = n_maj / n_min`` and each
    majority sample with weight 1. Votes are compared in exact integer
    arithmetic (scaling every weight by ``n_min``), so a mathematical tie is
    a tie and predicts -1. With ``rho = 1`` this is exactly the unweighted
    full-data vote.
    """

    def __init__(self, n_bins: int | None = None):
        self.n_bins = n_bins

    def fit(self, X, y, group):
        data = check_training_set(X, y, group)
        if data.n_min == 0:
            raise InsufficientDataError("weighted binning needs minority samples")
        k = self._resolve_bins(data)
        idx = bin_index(k, data.x)
        w = np.where(data.group == MINORITY, data.n_maj, data.n_min).astype(np.int64)
        pos = np.bincount(idx[data.y > 0], weights=w[data.y > 0], minlength=k)
        neg = np.bincount(idx[data.y < 0], weights=w[data.y < 0], minlength=k)
        self._set_fitted(_bin_classifier(k, pos.astype(np.int64) > neg.astype(np.int64)), k)
        return self


@dataclass(frozen=True, eq=False)
class HistogramDensityPair:
    """Per-bin class-conditional density estimates on ``k`` equal-width bins.

    Values are normalized so each estimate integrates to 1 over [0, 1]
    (bin value ``(count / n) * k``), unless a class has no samples at all,
    in which case its values are identically zero.
    """

    k: int
    p1_hat: np.ndarray
    pm1_hat: np.ndarray

    def __post_init__(self):
        p1 = np.asarray(self.p1_hat, dtype=float)
        pm1 = np.asarray(self.pm1_hat, dtype=float)
        if p1.shape != (self.k,) or pm1.shape != (self.k,):
            raise ValueError("need one value per bin for each class")
        if np.any(p1 < 0) or np.any(pm1 < 0):
            raise ValueError("density estimates must be nonnegative")
        for vals in (p1, pm1):
            total = vals.sum() / self.k
            if vals.any() and abs(total - 1.0) > 1e-12:
                raise ValueError(f"histogram mass {total} is not 1")


class HistogramPluginClassifier(_BinnedClassifierBase):
    """Histogram density estimates for both classes plus the plug-in rule.

    Only meaningful for label-shift data (group tag equals class). The fit
    undersamples, estimates each class-conditional density per bin, forms
    ``eta_hat = p1_hat / (p1_hat + pm1_hat)`` and thresholds it at 1/2. By
    construction the resulting rule is bin-for-bin identical to
    :class:`UndersampledBinningClassifier` run on the same balanced sample.
    """

    def __init__(self, n_bins: int | None = None, random_state=None):
        self.n_bins = n_bins
        self.random_state = random_state

    def fit(self, X, y, group):
        data = check_training_set(X, y, group)
        if data.n_min == 0:
            raise InsufficientDataError("histogram plug-in needs minority samples")
        maj, mino = data.group == MAJORITY, data.group == MINORITY
        if np.any(data.y[maj] != 1) or np.any(data.y[mino] != -1):
            raise WrongScenarioError(
                "histogram plug-in expects label-shift data "
                "(majority samples labeled +1, minority samples -1)"
            )
        rng = np.random.default_rng(self.random_state)
        balanced = undersample(data, rng)
        k = self._resolve_bins(data)
        n_pos, n_neg = _bin_counts(balanced.x, balanced.y, k)
        n_min = balanced.n_min
        self.density_pair_ = HistogramDensityPair(
            k, n_pos / n_min * k, n_neg / n_min * k
        )
        total = n_pos + n_neg
        eta = np.full(k, np.nan)
        nonzero = total > 0
        eta[nonzero] = n_pos[nonzero] / total[nonzero]
        self.eta_hat_ = eta
        self._set_fitted(_bin_classifier(k, n_pos > n_neg), k)
        return self


@dataclass(frozen=True, eq=False)
class FamilyPosterior:
    """Exact per-bin posterior over a hard family's index, given a dataset.

    ``table`` has one row per bin. For label shift each row is a probability
    vector over the 9 trit pairs in ``LABEL_SHIFT_CELLS``; for group shift it
    is a probability vector over the signs ``(-1, +1)``. The posterior over
    the full index factorizes as the product of the per-bin rows.
    """

    k: int
    kind: str
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        width = 9 if self.kind == LABEL_SHIFT else 2
        if self.kind not in (LABEL_SHIFT, GROUP_SHIFT):
            raise ValueError(f"unknown scenario kind: {self.kind!r}")
        if table.shape != (self.k, width):
            raise ValueError(f"posterior table must have shape ({self.k}, {width})")
        if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("each per-bin posterior row must be a probability vector")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def mean_signal(self) -> np.ndarray:
        """Per-bin posterior mean of the quantity that signs the optimal rule.

        Label shift: ``E[v1_j - vm1_j | S]``. Group shift: ``E[v_j | S]``.
        """
        if self.kind == LABEL_SHIFT:
            diff = np.array([a - b for a, b in LABEL_SHIFT_CELLS], dtype=float)
        else:
            diff = np.array(GROUP_SHIFT_CELLS, dtype=float)
        return self.table @ diff


def _logsumexp_rows(logs: np.ndarray) -> np.ndarray:
    shifted = np.exp(logs - logs.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def compute_family_posterior(data: Dataset, family_k: int, kind: str) -> FamilyPosterior:
    """Posterior over the hard-family index from a uniform prior.

    Per bin, the log-likelihood of each index cell is the sum over samples in
    that bin of the log of the cell's density (label shift) or conditional
    label probability (group shift) at the sample. Sums are normalized in
    log space with per-bin max subtraction, so long products cannot
    underflow. An empty dataset returns the uniform prior in every bin.
    """
    if family_k < 1:
        raise ValueError("family_k must be a positive integer")
    phi = hat_offset_values(family_k, data.x)
    bins = bin_index(family_k, data.x)
    if kind == LABEL_SHIFT:
        # Likelihood separates: majority samples inform v1, minority vm1.
        logs = np.zeros((family_k, 2, 3))
        for slot, tag in ((0, MAJORITY), (1, MINORITY)):
            sel = data.group == tag
            for cell, trit in enumerate(_TRITS):
                if trit == 0:
                    continue
                logs[:, slot, cell] = np.bincount(
                    bins[sel], weights=np.log1p(trit * phi[sel]), minlength=family_k
                )
        joint = logs[:, 0, :, None] + logs[:, 1, None, :]
        table = _logsumexp_rows(joint.reshape(family_k, 9))
    elif kind == GROUP_SHIFT:
        logs = np.zeros((family_k, 2))
        signed = data.y * phi
        for cell, sign in enumerate(GROUP_SHIFT_CELLS):
            logs[:, cell] = np.bincount(
                bins, weights=np.log1p(sign * signed), minlength=family_k
            )
        table = _logsumexp_rows(logs)
    else:
        raise ValueError(f"unknown scenario kind: {kind!r}")
    return FamilyPosterior(family_k, kind, table)


def posterior_oracle_classifier(posterior: FamilyPosterior) -> PiecewiseConstantClassifier:
    """Pointwise-optimal rule against the posterior mixture of the family.

    In bin j the mixture favors +1 exactly where ``d_j * hat(x - center_j)``
    is positive, with ``d_j`` the posterior mean signal; the rule is therefore
    constant on half bins. Zero signal (and the hat's zeros) resolve to -1.
    """
    k = posterior.k
    d = posterior.mean_signal()
    labels = np.full(2 * k, -1, dtype=np.int8)
    labels[0::2] = np.where(d < 0, 1, -1)  # left half-bin: hat < 0
    labels[1::2] = np.where(d > 0, 1, -1)  # right half-bin: hat > 0
    return PiecewiseConstantClassifier(np.linspace(0.0, 1.0, 2 * k + 1), labels)


class PosteriorOracleClassifier(BaseEstimator, ClassifierMixin):
    """Bayes-optimal classifier for the posterior mixture over a hard family.

    This is the information-theoretic benchmark: no estimator can beat its
    expected test risk when the data really come from the hard family with
    the declared ``family_k`` and scenario.
    """

    def __init__(self, family_k: int, scenario: str = LABEL_SHIFT):
        self.family_k = family_k
        self.scenario = scenario

    def fit(self, X, y, group):
        data = check_training_set(X, y, group)
        self.posterior_ = compute_family_posterior(data, self.family_k, self.scenario)
        self.classifier_ = posterior_oracle_classifier(self.posterior_)
        self.classes_ = np.array([-1, 1])
        return self

    def predict(self, X):
        if not hasattr(self, "classifier_"):
            raise NotFittedError("PosteriorOracleClassifier is not fitted yet")
        return np.asarray(self.classifier_(check_features(X)))
