"""Piecewise-linear functions on an interval: exact integration, information
distances, inverse-CDF sampling, and piecewise-constant label rules.

Everything in this module is exact up to floating-point rounding, with one
exception: the KL divergence, whose integrand is not polynomial, is computed
with per-segment adaptive Simpson quadrature to a fixed absolute tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Density",
    "InvalidDensityError",
    "KL_QUAD_TOL",
    "LipschitzCertificate",
    "MASS_TOL",
    "PiecewiseConstantClassifier",
    "PiecewiseLinearFn",
    "hat_function",
    "integrate",
    "integrate_abs",
    "integrate_product",
    "kl_divergence",
    "kl_integral",
    "lipschitz_constant",
    "overlap",
    "tv_distance",
]

#: Tolerance on |total mass - 1| for a valid density.
MASS_TOL = 1e-12
#: Absolute per-segment tolerance for the adaptive KL quadrature.
KL_QUAD_TOL = 1e-10

_KL_MAX_DEPTH = 40


class InvalidDensityError(ValueError):
    """Breakpoint values do not describe a probability density."""


@dataclass(frozen=True, eq=False)
class PiecewiseLinearFn:
    """Continuous piecewise-linear function on a closed interval.

    Parameters
    ----------
    xs : array-like
        Strictly increasing breakpoints; the first and last define the domain.
    ys : array-like
        Function value at each breakpoint. The function interpolates linearly
        between consecutive breakpoints, so it is continuous by construction.
    """

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float)
        ys = np.array(self.ys, dtype=float)
        if xs.ndim != 1 or xs.size < 2:
            raise ValueError("need at least two breakpoints")
        if ys.shape != xs.shape:
            raise ValueError("breakpoints and values must have the same length")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("breakpoints and values must be finite")
        if not np.all(np.diff(xs) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.xs[0]), float(self.xs[-1])

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys)

    def shifted(self, offset: float) -> "PiecewiseLinearFn":
        """Translate the graph horizontally by ``offset``."""
        return PiecewiseLinearFn(self.xs + offset, self.ys)

    def affine(self, scale: float, shift: float = 0.0) -> "PiecewiseLinearFn":
        """Pointwise ``scale * f + shift`` on the same breakpoints."""
        return PiecewiseLinearFn(self.xs, scale * self.ys + shift)


def _check_range(f: PiecewiseLinearFn, a: float, b: float) -> tuple[float, float]:
    lo, hi = f.support
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("integration limits must be finite")
    if a > b:
        raise ValueError(f"invalid integration range: a={a} > b={b}")
    if a < lo - 1e-12 or b > hi + 1e-12:
        raise ValueError(f"range [{a}, {b}] outside function support [{lo}, {hi}]")
    return max(a, lo), min(b, hi)


def _grid_between(xs: np.ndarray, a: float, b: float) -> np.ndarray:
    """Breakpoints of ``xs`` strictly inside (a, b), with a and b appended."""
    inner = xs[(xs > a) & (xs < b)]
    return np.concatenate(([a], inner, [b]))


def integrate(f: PiecewiseLinearFn, a: float, b: float) -> float:
    """Exact integral of ``f`` over ``[a, b]`` (trapezoid on each segment)."""
    a, b = _check_range(f, a, b)
    grid = _grid_between(f.xs, a, b)
    vals = f(grid)
    return float(np.sum(np.diff(grid) * (vals[:-1] + vals[1:])) * 0.5)


def integrate_abs(f: PiecewiseLinearFn, a: float, b: float) -> float:
    """Exact integral of ``|f|`` over ``[a, b]``.

    Segments are split at the sign changes of ``f`` (a linear root per
    segment), after which each piece has constant sign and integrates as a
    trapezoid.
    """
    a, b = _check_range(f, a, b)
    grid = _grid_between(f.xs, a, b)
    vals = f(grid)
    cross = vals[:-1] * vals[1:] < 0.0
    if np.any(cross):
        i = np.nonzero(cross)[0]
        roots = grid[i] - vals[i] * (grid[i + 1] - grid[i]) / (vals[i + 1] - vals[i])
        grid = np.sort(np.concatenate((grid, roots)))
        vals = f(grid)
    pieces = 0.5 * np.diff(grid) * (vals[:-1] + vals[1:])
    return float(np.sum(np.abs(pieces)))


def integrate_product(f: PiecewiseLinearFn, g: PiecewiseLinearFn, a: float, b: float) -> float:
    """Exact integral of ``f * g`` over ``[a, b]``.

    On the union of the two breakpoint grids the product is a quadratic, which
    Simpson's rule integrates exactly.
    """
    a, b = _check_range(f, a, b)
    _check_range(g, a, b)
    grid = _grid_between(np.union1d(f.xs, g.xs), a, b)
    fv, gv = f(grid), g(grid)
    fm = 0.5 * (fv[:-1] + fv[1:])
    gm = 0.5 * (gv[:-1] + gv[1:])
    h = np.diff(grid)
    return float(np.sum(h / 6.0 * (fv[:-1] * gv[:-1] + 4.0 * fm * gm + fv[1:] * gv[1:])))


@dataclass(frozen=True)
class LipschitzCertificate:
    """Largest absolute slope over the segments of a piecewise-linear function."""

    constant: float


def lipschitz_constant(f: PiecewiseLinearFn) -> LipschitzCertificate:
    slopes = np.diff(f.ys) / np.diff(f.xs)
    return LipschitzCertificate(float(np.max(np.abs(slopes))))


def hat_function(k: int) -> PiecewiseLinearFn:
    """Zero-mean tent perturbation with peak 1/(4k) on [-1/(2k), 1/(2k)].

    The function is odd and 1-Lipschitz: it descends linearly to -1/(4k) at
    -1/(4k), returns to zero at the origin, rises to +1/(4k) at +1/(4k) and
    comes back to zero at the edge of its support. Callers translate it by a
    bin center to perturb a single bin of a density or of a conditional.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    h = 1.0 / (4.0 * k)
    xs = np.array([-2.0 * h, -h, 0.0, h, 2.0 * h])
    ys = np.array([0.0, -h, 0.0, h, 0.0])
    return PiecewiseLinearFn(xs, ys)


@dataclass(frozen=True, eq=False)
class Density:
    """Probability density on [0, 1] with continuous piecewise-linear shape.

    Construction validates nonnegativity at the breakpoints (sufficient for a
    piecewise-linear shape) and unit total mass to within ``MASS_TOL``.
    Breakpoint values within ``MASS_TOL`` below zero are snapped to zero so
    that segment masses are never negative.
    """

    fn: PiecewiseLinearFn

    def __post_init__(self):
        xs, ys = self.fn.xs, self.fn.ys
        if xs[0] != 0.0 or xs[-1] != 1.0:
            raise InvalidDensityError(
                f"density domain must be [0, 1], got [{xs[0]}, {xs[-1]}]"
            )
        if np.any(ys < -MASS_TOL):
            raise InvalidDensityError(f"negative density value: min={ys.min()}")
        if np.any(ys < 0.0):
            object.__setattr__(self, "fn", PiecewiseLinearFn(xs, np.maximum(ys, 0.0)))
            ys = self.fn.ys
        seg_mass = 0.5 * np.diff(xs) * (ys[:-1] + ys[1:])
        cum = np.concatenate(([0.0], np.cumsum(seg_mass)))
        mass = float(cum[-1])
        if abs(mass - 1.0) > MASS_TOL:
            raise InvalidDensityError(f"total mass {mass} is not 1 within {MASS_TOL}")
        object.__setattr__(self, "total_mass", mass)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_slopes", np.diff(ys) / np.diff(xs))

    @property
    def shape(self) -> PiecewiseLinearFn:
        return self.fn

    def pdf(self, x):
        return self.fn(x)

    def cdf(self, x):
        """Exact CDF (piecewise quadratic), evaluated elementwise."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        xs, ys = self.fn.xs, self.fn.ys
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
        t = x - xs[idx]
        return self._cum[idx] + ys[idx] * t + 0.5 * self._slopes[idx] * t * t

    def inverse_cdf(self, u):
        """Exact inverse CDF via a per-segment quadratic solve.

        Uses the cancellation-free root ``t = 2r / (p0 + sqrt(p0^2 + 2 s r))``,
        which degenerates to the linear solution ``r / p0`` on a zero-slope
        segment.
        """
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        u = np.atleast_1d(np.clip(u, 0.0, self.total_mass))
        xs, ys = self.fn.xs, self.fn.ys
        idx = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, len(xs) - 2)
        r = u - self._cum[idx]
        p0 = ys[idx]
        s = self._slopes[idx]
        disc = np.maximum(p0 * p0 + 2.0 * s * r, 0.0)
        denom = p0 + np.sqrt(disc)
        t = np.where(denom > 0.0, 2.0 * r / np.where(denom > 0.0, denom, 1.0), 0.0)
        x = np.clip(xs[idx] + t, xs[idx], xs[idx + 1])
        return float(x[0]) if scalar else x

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw exact inverse-CDF samples; deterministic given the rng state."""
        return self.inverse_cdf(rng.random(size))


def tv_distance(p: Density, q: Density) -> float:
    """Total variation distance ``(1/2) * integral |p - q|``, computed exactly."""
    grid = np.union1d(p.fn.xs, q.fn.xs)
    diff = PiecewiseLinearFn(grid, p.fn(grid) - q.fn(grid))
    return 0.5 * integrate_abs(diff, 0.0, 1.0)


def overlap(p: Density, q: Density) -> float:
    """``1 - tv_distance(p, q)``: 1 for identical densities, 0 for disjoint."""
    return 1.0 - tv_distance(p, q)


def _simpson(h, a, b, fa, fm, fb):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _adaptive_simpson(h, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = h(lm), h(rm)
    left = _simpson(h, a, m, fa, flm, fm)
    right = _simpson(h, m, b, fm, frm, fb)
    err = left + right - whole
    if depth <= 0 or abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    half = 0.5 * tol
    return _adaptive_simpson(h, a, m, fa, flm, fm, left, half, depth - 1) + _adaptive_simpson(
        h, m, b, fm, frm, fb, right, half, depth - 1
    )


def kl_integral(p: PiecewiseLinearFn, q: PiecewiseLinearFn, a: float, b: float) -> float:
    """``integral of p * log(p / q)`` over ``[a, b]`` for piecewise-linear p, q.

    Returns ``math.inf`` when ``q`` vanishes (or goes negative) on a segment
    where ``p`` is positive; this is the absolute-continuity failure signal,
    not an error. Where ``p`` is zero the integrand contributes nothing.

    Each segment of the union breakpoint grid is integrated with adaptive
    Simpson quadrature to absolute tolerance ``KL_QUAD_TOL``.
    """
    a, b = _check_range(p, a, b)
    _check_range(q, a, b)
    grid = _grid_between(np.union1d(p.xs, q.xs), a, b)
    pv, qv = p(grid), q(grid)
    if np.any(pv < -MASS_TOL):
        raise ValueError("p must be nonnegative")
    total = 0.0
    for i in range(len(grid) - 1):
        x0, x1 = grid[i], grid[i + 1]
        p0, p1 = pv[i], pv[i + 1]
        q0, q1 = qv[i], qv[i + 1]
        if max(p0, p1) <= 0.0:
            continue
        if min(q0, q1) <= 0.0:
            return math.inf
        sp = (p1 - p0) / (x1 - x0)
        sq = (q1 - q0) / (x1 - x0)

        def h(x, x0=x0, p0=p0, q0=q0, sp=sp, sq=sq):
            t = x - x0
            pt = p0 + sp * t
            if pt <= 0.0:
                return 0.0
            return pt * math.log(pt / (q0 + sq * t))

        fa, fb = h(x0), h(x1)
        m = 0.5 * (x0 + x1)
        fm = h(m)
        whole = _simpson(h, x0, x1, fa, fm, fb)
        total += _adaptive_simpson(h, x0, x1, fa, fm, fb, whole, KL_QUAD_TOL, _KL_MAX_DEPTH)
    return total


def kl_divergence(p: Density, q: Density) -> float:
    """KL divergence ``integral p log(p/q)`` over [0, 1]; ``inf`` without
    absolute continuity. Quadrature dust below zero is clamped to zero."""
    val = kl_integral(p.fn, q.fn, 0.0, 1.0)
    return val if val == math.inf else max(0.0, val)


@dataclass(frozen=True, eq=False)
class PiecewiseConstantClassifier:
    """Label rule on [0, 1]: constant +/-1 on each cell between breakpoints.

    Cell ``i`` is ``[breakpoints[i], breakpoints[i+1])``; the final cell is
    closed so ``x = 1`` belongs to it.
    """

    breakpoints: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float)
        labels = np.array(self.labels, dtype=np.int8)
        if bp.ndim != 1 or bp.size < 2:
            raise ValueError("need at least two breakpoints")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise ValueError("classifier must cover exactly [0, 1]")
        if not np.all(np.diff(bp) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if labels.shape != (bp.size - 1,):
            raise ValueError("need one label per cell")
        if not np.all(np.abs(labels) == 1):
            raise ValueError("labels must be -1 or +1")
        bp.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "labels", labels)

    @property
    def n_cells(self) -> int:
        return len(self.labels)

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        idx = np.clip(idx, 0, len(self.labels) - 1)
        return self.labels[idx]

    def cells(self):
        """Iterate over ``(left, right, label)`` triples."""
        for i, lab in enumerate(self.labels):
            yield float(self.breakpoints[i]), float(self.breakpoints[i + 1]), int(lab)

    def flipped(self) -> "PiecewiseConstantClassifier":
        return PiecewiseConstantClassifier(self.breakpoints, -self.labels)
