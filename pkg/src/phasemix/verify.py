"""Self-contained property suites behind the ``verify`` CLI command.

Each suite runs a modest randomized batch on small grids and returns a
JSON-ready record with an overall ``ok`` flag, so failures are visible
without the full test harness.
"""

from __future__ import annotations

import numpy as np

from .energy import energy
from .field import DensityField, Grid, PhasePair
from .kernel import KernelSpec, interaction
from .rearrange import check_rearr0, grid_tolerance, riesz_gap, symmetric_decreasing
from .solver import project_admissible


def _random_density(rng, grid, scale=0.8):
    v = rng.uniform(0.0, scale, size=grid.cells)
    # carve out a random blob so supports vary from draw to draw
    d2 = grid.distance_sq(tuple(rng.uniform(-0.3, 0.3, grid.dim)))
    v = v * (d2 < rng.uniform(0.2, 1.0))
    if v.sum() == 0:
        v.flat[0] = 0.5
    return DensityField(grid, v)


def verify_rearrange(n_cases=10, seed=0):
    """Riesz gaps nonnegative up to the grid tolerance, across kernels."""
    rng = np.random.default_rng(seed)
    checks = []
    for dim, n, h in ((1, 64, 1.0 / 16), (2, 32, 1.0 / 8)):
        grid = Grid.centered(dim, n, h)
        kernels = [KernelSpec.coulomb(dim), KernelSpec.gaussian(0.5),
                   KernelSpec.tent(1.0)]
        for spec in kernels:
            for _ in range(n_cases):
                f = _random_density(rng, grid)
                g = _random_density(rng, grid)
                gap = riesz_gap(f, g, spec)
                eps = grid_tolerance(f, g, spec)
                checks.append({"dim": dim, "kernel": spec.kind,
                               "gap": gap, "eps": eps, "ok": gap >= -eps})
        if dim >= 2:
            spec = KernelSpec.coulomb(dim)
            for _ in range(n_cases):
                f = _random_density(rng, grid)
                r = check_rearr0(f, spec)
                checks.append({"dim": dim, "kernel": "coulomb/rearr0",
                               "gap": r.min_gap, "eps": r.eps_grid, "ok": r.ok})
    return {"checks": len(checks), "failures": sum(not c["ok"] for c in checks),
            "worst": min(c["gap"] + c["eps"] for c in checks),
            "ok": all(c["ok"] for c in checks)}


def verify_projection(n_cases=20, n_competitors=50, seed=1):
    """Projection output beats random admissible competitors in distance."""
    rng = np.random.default_rng(seed)
    grid = Grid.centered(1, 48, 1.0 / 8)
    vol = grid.cell_volume
    failures = 0
    for _ in range(n_cases):
        raw1 = rng.normal(0.2, 0.6, grid.cells)
        raw2 = rng.normal(0.2, 0.6, grid.cells)
        m1, m2 = rng.uniform(0.3, 1.5, 2)
        x, y, _ = project_admissible(raw1, raw2, m1, m2, grid)
        d_best = ((x - raw1) ** 2 + (y - raw2) ** 2).sum()
        for _ in range(n_competitors):
            u = rng.uniform(0.0, 1.0, grid.cells)
            v = rng.uniform(0.0, 1.0, grid.cells) * (1.0 - u)
            u *= m1 / (u.sum() * vol)
            v *= m2 / (v.sum() * vol)
            if u.max() > 1 or (u + v).max() > 1:
                continue
            d = ((u - raw1) ** 2 + (v - raw2) ** 2).sum()
            if d < d_best - 1e-12:
                failures += 1
                break
    return {"cases": n_cases, "failures": failures, "ok": failures == 0}


def verify_gradient(n_cases=8, seed=2):
    """Finite differences against the closed-form cell-wise gradient."""
    rng = np.random.default_rng(seed)
    grid = Grid.centered(1, 32, 1.0 / 8)
    spec = KernelSpec.gaussian(0.7)
    vol = grid.cell_volume
    worst = 0.0
    for _ in range(n_cases):
        f1 = _random_density(rng, grid, scale=0.45)
        f2 = _random_density(rng, grid, scale=0.45)
        c11, c22 = rng.uniform(-1.5, 0.0, 2)
        pair = PhasePair(f1, f2, c11, c22, f1.mass, f2.mass)
        base = energy(pair, spec).total
        from .energy import first_variation

        var = first_variation(pair, spec)
        k = tuple(rng.integers(0, n) for n in grid.cells)
        eps = 1e-6
        v1 = f1.values.copy()
        v1[k] += eps
        bumped = (
            c11 * interaction(DensityField(grid, np.clip(v1, 0, 1)),
                              DensityField(grid, np.clip(v1, 0, 1)), spec)
            + c22 * interaction(f2, f2, spec)
            - 2.0 * interaction(DensityField(grid, np.clip(v1, 0, 1)), f2, spec)
        )
        fd = (bumped - base) / eps
        analytic = var.W1.values[k] * vol
        denom = max(abs(fd), abs(analytic), 1e-12)
        worst = max(worst, abs(fd - analytic) / denom)
    return {"cases": n_cases, "worst_rel_err": worst, "ok": worst < 1e-4}
