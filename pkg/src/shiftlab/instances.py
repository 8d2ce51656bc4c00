"""Shift instances and imbalanced dataset draws.

Two scenarios are supported. Under label shift the majority group is the
positive class and the minority group the negative class, each with its own
1-Lipschitz class-conditional density. Under group-covariate shift the two
groups have arbitrary marginal densities but share a 1-Lipschitz conditional
``eta(x) = P(y = 1 | x)``. In both cases the test distribution is the uniform
mixture of the two group distributions.

The "hard" families perturb the uniform density (or the constant-1/2
conditional) by one signed hat function per bin; they are the instances on
which the minimax lower bounds are proved, and the posterior oracle in
:mod:`shiftlab.estimators` is exact on them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .piecewise import Density, PiecewiseLinearFn, lipschitz_constant

__all__ = [
    "Dataset",
    "GROUP_SHIFT",
    "GroupShiftIndex",
    "LABEL_SHIFT",
    "LabelShiftIndex",
    "MAJORITY",
    "MINORITY",
    "RAMP_WIDTH",
    "Sample",
    "ShiftInstance",
    "bin_index",
    "draw_dataset",
    "group_shift_instance",
    "hat_offset_values",
    "label_shift_instance",
    "make_group_shift_hard",
    "make_label_shift_hard",
    "random_index",
    "undersample",
]

LABEL_SHIFT = "label_shift"
GROUP_SHIFT = "group_shift"

MAJORITY = 0
MINORITY = 1

#: Width of the linear ramp replacing the jump of the step group marginals at
#: x = 0.5, so densities stay continuous. Shifts the overlap by < 1e-9.
RAMP_WIDTH = 1e-9

_LIPSCHITZ_TOL = 1e-12


@dataclass(frozen=True)
class LabelShiftIndex:
    """Index of a hard label-shift instance: one trit per bin and per class."""

    v1: tuple[int, ...]
    vm1: tuple[int, ...]

    def __post_init__(self):
        if len(self.v1) < 1 or len(self.v1) != len(self.vm1):
            raise ValueError("v1 and vm1 must have the same positive length")
        if any(t not in (-1, 0, 1) for t in self.v1 + self.vm1):
            raise ValueError("index entries must be -1, 0 or +1")

    @property
    def k(self) -> int:
        return len(self.v1)


@dataclass(frozen=True)
class GroupShiftIndex:
    """Index of a hard group-shift instance: one sign per bin, plus overlap."""

    v: tuple[int, ...]
    tau: float

    def __post_init__(self):
        if len(self.v) < 1:
            raise ValueError("v must be nonempty")
        if any(s not in (-1, 1) for s in self.v):
            raise ValueError("index entries must be -1 or +1")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")

    @property
    def k(self) -> int:
        return len(self.v)


class Sample(NamedTuple):
    x: float
    y: int
    group: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Training samples: features in [0, 1], labels in {-1, +1}, group tags."""

    x: np.ndarray
    y: np.ndarray
    group: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=np.int8)
        group = np.asarray(self.group, dtype=np.int8)
        if not (x.shape == y.shape == group.shape) or x.ndim != 1:
            raise ValueError("x, y and group must be 1-d arrays of equal length")
        if x.size and (x.min() < 0.0 or x.max() > 1.0):
            raise ValueError("features must lie in [0, 1]")
        if not np.all(np.abs(y) == 1):
            raise ValueError("labels must be -1 or +1")
        if not np.all((group == MAJORITY) | (group == MINORITY)):
            raise ValueError("group tags must be MAJORITY or MINORITY")
        for arr in (x, y, group):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "group", group)

    def __len__(self) -> int:
        return len(self.x)

    def __getitem__(self, i: int) -> Sample:
        return Sample(float(self.x[i]), int(self.y[i]), int(self.group[i]))

    @property
    def n_maj(self) -> int:
        return int(np.sum(self.group == MAJORITY))

    @property
    def n_min(self) -> int:
        return int(np.sum(self.group == MINORITY))

    def subset(self, indices) -> "Dataset":
        return Dataset(self.x[indices], self.y[indices], self.group[indices])


@dataclass(frozen=True, eq=False)
class ShiftInstance:
    """A (majority, minority) pair of distributions with exact test mixture.

    For label shift, ``p_maj`` is the feature density of the positive class
    (labels are deterministically +1 on the majority group, -1 on the
    minority group) and ``eta`` is None. For group shift, ``p_maj`` and
    ``p_min`` are the group marginals and ``eta`` is the shared conditional
    probability of the positive label.
    """

    kind: str
    p_maj: Density
    p_min: Density
    eta: PiecewiseLinearFn | None = None

    def __post_init__(self):
        if self.kind == LABEL_SHIFT:
            if self.eta is not None:
                raise ValueError("label-shift instances derive eta; do not store it")
            for d in (self.p_maj, self.p_min):
                c = lipschitz_constant(d.fn).constant
                if c > 1.0 + _LIPSCHITZ_TOL:
                    raise ValueError(f"class conditional is not 1-Lipschitz: {c}")
        elif self.kind == GROUP_SHIFT:
            if self.eta is None:
                raise ValueError("group-shift instances need the shared conditional eta")
            lo, hi = self.eta.support
            if lo != 0.0 or hi != 1.0:
                raise ValueError("eta must be defined on [0, 1]")
            if self.eta.ys.min() < -1e-12 or self.eta.ys.max() > 1.0 + 1e-12:
                raise ValueError("eta must take values in [0, 1]")
            c = lipschitz_constant(self.eta).constant
            if c > 1.0 + _LIPSCHITZ_TOL:
                raise ValueError(f"eta is not 1-Lipschitz: {c}")
        else:
            raise ValueError(f"unknown scenario kind: {self.kind!r}")

    @property
    def test_marginal(self) -> PiecewiseLinearFn:
        """Feature density of the test mixture, ``(p_maj + p_min) / 2``."""
        cached = self.__dict__.get("_test_marginal")
        if cached is None:
            grid = np.union1d(self.p_maj.fn.xs, self.p_min.fn.xs)
            cached = PiecewiseLinearFn(grid, 0.5 * (self.p_maj.fn(grid) + self.p_min.fn(grid)))
            object.__setattr__(self, "_test_marginal", cached)
        return cached

    @property
    def eta_complement(self) -> PiecewiseLinearFn:
        """``1 - eta`` (group shift only)."""
        if self.eta is None:
            raise ValueError("label-shift instances have no stored eta")
        cached = self.__dict__.get("_eta_complement")
        if cached is None:
            cached = self.eta.affine(-1.0, 1.0)
            object.__setattr__(self, "_eta_complement", cached)
        return cached


def label_shift_instance(p1: Density, pm1: Density) -> ShiftInstance:
    """Instance from class-conditional densities (majority class is +1)."""
    return ShiftInstance(LABEL_SHIFT, p1, pm1)


def group_shift_instance(p_a: Density, p_b: Density, eta: PiecewiseLinearFn) -> ShiftInstance:
    """Instance from group marginals and the shared conditional."""
    return ShiftInstance(GROUP_SHIFT, p_a, p_b, eta)


def _quarter_grid(k: int) -> np.ndarray:
    return np.arange(4 * k + 1) / (4.0 * k)


def _hat_perturbed(k: int, coefs: np.ndarray, base: float, scale: float) -> np.ndarray:
    """Values of ``base + scale * coef_j * hat(x - center_j)`` on the quarter grid."""
    vals = np.full(4 * k + 1, base)
    amp = scale / (4.0 * k)
    vals[1::4] = base - amp * coefs
    vals[3::4] = base + amp * coefs
    return vals


@lru_cache(maxsize=512)
def _label_shift_hard(v1: tuple[int, ...], vm1: tuple[int, ...]) -> ShiftInstance:
    k = len(v1)
    grid = _quarter_grid(k)
    p1 = Density(PiecewiseLinearFn(grid, _hat_perturbed(k, np.array(v1), 1.0, 1.0)))
    pm1 = Density(PiecewiseLinearFn(grid, _hat_perturbed(k, np.array(vm1), 1.0, 1.0)))
    return label_shift_instance(p1, pm1)


@lru_cache(maxsize=512)
def _group_shift_hard(v: tuple[int, ...], tau: float) -> ShiftInstance:
    k = len(v)
    half = 0.5 * RAMP_WIDTH
    xs = np.array([0.0, 0.5 - half, 0.5 + half, 1.0])
    p_a = Density(PiecewiseLinearFn(xs, [2.0 - tau, 2.0 - tau, tau, tau]))
    p_b = Density(PiecewiseLinearFn(xs, [tau, tau, 2.0 - tau, 2.0 - tau]))
    eta = PiecewiseLinearFn(_quarter_grid(k), _hat_perturbed(k, np.array(v), 0.5, 0.5))
    return group_shift_instance(p_a, p_b, eta)


def make_label_shift_hard(index: LabelShiftIndex) -> ShiftInstance:
    """Hard label-shift instance: class conditionals ``1 + v_j * hat`` per bin."""
    return _label_shift_hard(index.v1, index.vm1)


def make_group_shift_hard(index: GroupShiftIndex) -> ShiftInstance:
    """Hard group-shift instance: step marginals with overlap ``tau`` and
    conditional ``(1 + v_j * hat) / 2`` per bin."""
    return _group_shift_hard(index.v, float(index.tau))


def random_index(kind: str, k: int, rng: np.random.Generator, tau: float | None = None):
    """Uniform draw from the hard-family index set.

    Label shift draws a pair of trit vectors (9^k outcomes); group shift draws
    a sign vector (2^k outcomes) and attaches the supplied overlap ``tau``.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if kind == LABEL_SHIFT:
        v1 = tuple(int(t) for t in rng.integers(-1, 2, size=k))
        vm1 = tuple(int(t) for t in rng.integers(-1, 2, size=k))
        return LabelShiftIndex(v1, vm1)
    if kind == GROUP_SHIFT:
        if tau is None:
            raise ValueError("group-shift indices need the overlap tau")
        v = tuple(int(s) for s in 2 * rng.integers(0, 2, size=k) - 1)
        return GroupShiftIndex(v, float(tau))
    raise ValueError(f"unknown scenario kind: {kind!r}")


def bin_index(k: int, x: np.ndarray) -> np.ndarray:
    """Index of the bin ``[(j-1)/k, j/k)`` containing each x; x = 1 maps to
    the last bin."""
    edges = np.linspace(0.0, 1.0, k + 1)
    return np.clip(np.searchsorted(edges, x, side="right") - 1, 0, k - 1)


def hat_offset_values(k: int, x: np.ndarray) -> np.ndarray:
    """``hat_k(x - center of the bin containing x)``, vectorized.

    This is the per-bin perturbation profile shared by both hard families.
    """
    x = np.asarray(x, dtype=float)
    j = bin_index(k, x)
    t = 2.0 * (x * k - j) - 1.0
    unit = np.interp(t, [-1.0, -0.5, 0.0, 0.5, 1.0], [0.0, -1.0, 0.0, 1.0, 0.0])
    return unit / (4.0 * k)


def draw_dataset(
    instance: ShiftInstance, n_maj: int, n_min: int, rng: np.random.Generator
) -> Dataset:
    """Draw ``n_maj`` i.i.d. majority and ``n_min`` i.i.d. minority samples.

    Labels are deterministic per group under label shift; under group shift
    each label is +1 when a fresh uniform falls below ``eta(x)``. The rng is
    consumed in a fixed order (majority features, majority labels, minority
    features, minority labels) so draws are reproducible.
    """
    if n_min < 0 or n_maj < n_min:
        raise ValueError(f"need n_maj >= n_min >= 0, got ({n_maj}, {n_min})")

    def block(density: Density, n: int, positive_group: bool) -> tuple[np.ndarray, np.ndarray]:
        xs = np.atleast_1d(density.sample(rng, n))
        if instance.kind == LABEL_SHIFT:
            ys = np.full(n, 1 if positive_group else -1, dtype=np.int8)
        else:
            u = rng.random(n)
            ys = np.where(u < instance.eta(xs), 1, -1).astype(np.int8)
        return xs, ys

    x_maj, y_maj = block(instance.p_maj, n_maj, True)
    x_min, y_min = block(instance.p_min, n_min, False)
    group = np.concatenate(
        (np.full(n_maj, MAJORITY, dtype=np.int8), np.full(n_min, MINORITY, dtype=np.int8))
    )
    return Dataset(np.concatenate((x_maj, x_min)), np.concatenate((y_maj, y_min)), group)


def _canonical_order(data: Dataset, indices: np.ndarray) -> np.ndarray:
    """Order sample indices by (x, y) so selection ignores input ordering."""
    return indices[np.lexsort((data.y[indices], data.x[indices]))]


def undersample(data: Dataset, rng: np.random.Generator) -> Dataset:
    """Balance the groups: keep every minority sample plus an equal number of
    majority samples chosen uniformly at random without replacement.

    The output has exactly ``2 * n_min`` samples and never duplicates a
    majority sample. Samples are put in a canonical (x, y) order per group
    before selection, so the result depends on the input only through its
    multiset of samples.
    """
    n_maj, n_min = data.n_maj, data.n_min
    if n_min > n_maj:
        raise ValueError(f"cannot undersample: n_min={n_min} > n_maj={n_maj}")
    maj = _canonical_order(data, np.nonzero(data.group == MAJORITY)[0])
    mino = _canonical_order(data, np.nonzero(data.group == MINORITY)[0])
    chosen = np.sort(rng.choice(n_maj, size=n_min, replace=False)) if n_maj else np.array([], int)
    return data.subset(np.concatenate((maj[chosen], mino)))
