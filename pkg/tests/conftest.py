"""Shared generators and independent oracles used across the test suite.

The oracles here deliberately avoid the library's own integration paths:
risks are checked against midpoint-Riemann sums on dense grids, and KL
integrals against 64-node Gauss-Legendre quadrature per segment.
"""

import numpy as np
import pytest

from shiftlab import (
    Density,
    GROUP_SHIFT,
    LABEL_SHIFT,
    PiecewiseConstantClassifier,
    PiecewiseLinearFn,
    group_shift_instance,
    label_shift_instance,
)


def random_lipschitz_density(rng, n_knots=9, floor=0.05):
    """Random 1-Lipschitz density on [0, 1], mass exactly 1 by construction.

    Builds a random 1-Lipschitz profile, recenters it to unit mass, then
    shrinks deviations from uniform until the floor is respected; both steps
    preserve the Lipschitz bound and the exact mass.
    """
    xs = np.sort(rng.uniform(0.05, 0.95, size=n_knots - 2))
    xs = np.concatenate(([0.0], xs, [1.0]))
    slopes = rng.uniform(-1.0, 1.0, size=len(xs) - 1)
    ys = np.concatenate(([0.0], np.cumsum(slopes * np.diff(xs))))
    mass = np.sum(0.5 * np.diff(xs) * (ys[:-1] + ys[1:]))
    ys = ys + (1.0 - mass)
    low = ys.min()
    if low < floor:
        lam = (1.0 - floor) / (1.0 - low)
        ys = 1.0 + lam * (ys - 1.0)
    return Density(PiecewiseLinearFn(xs, ys))


def random_eta(rng, n_knots=9, margin=0.05):
    """Random 1-Lipschitz conditional with values in [margin, 1 - margin]."""
    xs = np.sort(rng.uniform(0.05, 0.95, size=n_knots - 2))
    xs = np.concatenate(([0.0], xs, [1.0]))
    slopes = rng.uniform(-1.0, 1.0, size=len(xs) - 1)
    ys = rng.uniform(0.2, 0.8) + np.concatenate(([0.0], np.cumsum(slopes * np.diff(xs))))
    lo, hi = ys.min(), ys.max()
    if lo < margin or hi > 1.0 - margin:
        mid = 0.5 * (lo + hi)
        scale = min(1.0, (0.5 - margin) / max(hi - mid, mid - lo))
        ys = 0.5 + scale * (ys - mid)
    return PiecewiseLinearFn(xs, ys)


def random_instance(rng, kind):
    if kind == LABEL_SHIFT:
        return label_shift_instance(
            random_lipschitz_density(rng), random_lipschitz_density(rng)
        )
    return group_shift_instance(
        random_lipschitz_density(rng), random_lipschitz_density(rng), random_eta(rng)
    )


def random_classifier(rng, max_cells=12):
    n_cells = int(rng.integers(1, max_cells + 1))
    cuts = np.sort(rng.uniform(0.0, 1.0, size=n_cells - 1))
    bp = np.concatenate(([0.0], cuts, [1.0]))
    labels = rng.choice([-1, 1], size=n_cells)
    return PiecewiseConstantClassifier(bp, labels)


def riemann_risk(f, instance, n_points=1_000_000):
    """Midpoint-Riemann oracle for the exact test risk."""
    x = (np.arange(n_points) + 0.5) / n_points
    pred = f(x)
    if instance.kind == LABEL_SHIFT:
        integrand = 0.5 * np.where(
            pred > 0, instance.p_min.pdf(x), instance.p_maj.pdf(x)
        )
    else:
        ptest = 0.5 * (instance.p_maj.pdf(x) + instance.p_min.pdf(x))
        eta = instance.eta(x)
        integrand = ptest * np.where(pred > 0, 1.0 - eta, eta)
    return float(integrand.mean())


def gauss_legendre_kl(p, q, a, b, nodes=64):
    """Independent KL oracle: 64-node Gauss-Legendre on each union segment."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    grid = np.union1d(p.xs, q.xs)
    grid = np.concatenate(([a], grid[(grid > a) & (grid < b)], [b]))
    total = 0.0
    for x0, x1 in zip(grid[:-1], grid[1:]):
        x = 0.5 * (x1 - x0) * t + 0.5 * (x0 + x1)
        pv, qv = p(x), q(x)
        vals = np.where(pv > 0, pv * np.log(np.where(pv > 0, pv, 1.0) / qv), 0.0)
        total += 0.5 * (x1 - x0) * np.sum(w * vals)
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
