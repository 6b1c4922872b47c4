"""Projected-gradient minimization over the discrete admissible class.

The iteration is f <- P(f - τ W) where W is the cell-wise energy gradient
and P the Euclidean projection onto {f1, f2 >= 0, f1+f2 <= 1, fixed
masses}. The projection runs a nested monotone bisection over two mass
multipliers around a closed-form pointwise projection onto the triangle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .analytic import (
    AnalyticError,
    analytic_minimizer,
    ball_radius,
    classify_regime,
)
from .energy import bathtub_fill, diagnostics_record, energy
from .field import (
    BOUNDARY_MASS_FRACTION,
    DensityField,
    FieldError,
    Grid,
    PhasePair,
    region_decomposition,
)
from .kernel import KernelSpec, offset_weights, potential_values

MASS_BISECTION_RTOL = 1e-10


class SolverError(ValueError):
    """Raised on infeasible or invalid solver configurations."""


class InfeasibleError(SolverError):
    """Masses do not fit in the grid."""


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid
    kernel: KernelSpec
    c11: float
    c22: float
    m1: float
    m2: float
    max_iters: int = 5000
    energy_tol: float = 1e-9
    stat_tol: float = 1e-6
    step_rule: tuple = ("backtracking", 0.5, 1e-4)
    init: str = "analytic"
    init_files: tuple = ()
    seed: int = 0
    recenter_every: int = 50
    block_fill_every: int = 20

    def __post_init__(self):
        if self.max_iters < 1:
            raise SolverError("max_iters must be >= 1")
        if self.energy_tol <= 0 or self.stat_tol <= 0:
            raise SolverError("tolerances must be positive")


@dataclass(frozen=True)
class SolverResult:
    pair: PhasePair
    energy_trace: tuple
    iterations: int
    status: str
    stationarity: dict
    I_value: float


def _triangle_project(u, v):
    """Pointwise projection of (u, v) onto {x, y >= 0, x + y <= 1}."""
    x = np.maximum(u, 0.0)
    y = np.maximum(v, 0.0)
    over = x + y > 1.0
    if np.any(over):
        xs = np.clip(0.5 * (u[over] - v[over] + 1.0), 0.0, 1.0)
        x = x.copy()
        y = y.copy()
        x[over] = xs
        y[over] = 1.0 - xs
    return x, y


def _masses(raw1, raw2, l1, l2, vol):
    x, y = _triangle_project(raw1 - l1, raw2 - l2)
    return x.sum() * vol, y.sum() * vol, x, y


def _newton_multipliers(raw1, raw2, m1, m2, vol, l1, l2):
    """Semismooth Newton on the two mass equations; the projection map is
    piecewise linear in the multipliers, so convergence is typically a
    handful of iterations. Returns None when it fails to converge."""
    for _ in range(60):
        u = raw1 - l1
        v = raw2 - l2
        x = np.maximum(u, 0.0)
        y = np.maximum(v, 0.0)
        over = x + y > 1.0
        xs_raw = 0.5 * (u - v + 1.0)
        if np.any(over):
            xs = np.clip(xs_raw[over], 0.0, 1.0)
            x = x.copy()
            y = y.copy()
            x[over] = xs
            y[over] = 1.0 - xs
        r1 = x.sum() * vol - m1
        r2 = y.sum() * vol - m2
        if abs(r1) <= MASS_BISECTION_RTOL * m1 and abs(r2) <= MASS_BISECTION_RTOL * m2:
            return l1, l2
        diag = over & (xs_raw > 0.0) & (xs_raw < 1.0)
        n_diag = float(diag.sum())
        n_fx = float(((u > 0.0) & ~over).sum())
        n_fy = float(((v > 0.0) & ~over).sum())
        J11 = -vol * (n_fx + 0.5 * n_diag)
        J22 = -vol * (n_fy + 0.5 * n_diag)
        J12 = vol * 0.5 * n_diag
        det = J11 * J22 - J12 * J12
        if abs(det) < 1e-300:
            return None
        d1 = (J22 * r1 - J12 * r2) / det
        d2 = (J11 * r2 - J12 * r1) / det
        step = max(abs(d1), abs(d2))
        if step > 1e6:
            return None
        l1 -= d1
        l2 -= d2
    return None


def project_admissible(raw1, raw2, m1, m2, grid, warm=None):
    """Euclidean projection onto the admissible class with exact masses.

    ``warm`` optionally carries the multipliers of a previous projection to
    shrink the bisection brackets. A piecewise-linear Newton iteration on
    the multipliers is tried first; the monotone nested bisection is the
    guaranteed fallback.
    """
    raw1 = np.asarray(raw1, dtype=float)
    raw2 = np.asarray(raw2, dtype=float)
    vol = grid.cell_volume
    if m1 <= 0 or m2 <= 0:
        raise InfeasibleError("masses must be positive")
    if m1 + m2 > grid.capacity * (1.0 - 1e-12):
        raise InfeasibleError(
            f"masses {m1}+{m2} exceed grid capacity {grid.capacity}"
        )

    g1_w, g2_w = warm if warm is not None else (0.0, 0.0)
    sol = _newton_multipliers(raw1, raw2, m1, m2, vol, g1_w, g2_w)
    if sol is None and warm is not None:
        sol = _newton_multipliers(raw1, raw2, m1, m2, vol, 0.0, 0.0)
    if sol is not None:
        l1, l2 = sol
        _, _, x, y = _masses(raw1, raw2, l1, l2, vol)
        x = x * (m1 / (x.sum() * vol))
        y = y * (m2 / (y.sum() * vol))
        x = np.clip(x, 0.0, 1.0)
        y = np.clip(y, 0.0, 1.0 - x)
        return x, y, (l1, l2)

    span = max(raw1.max() - raw1.min(), raw2.max() - raw2.min(), 1.0)

    def bracket(center, width):
        return center - width, center + width

    def solve_l2(l1, guess):
        lo, hi = bracket(guess, 0.1)
        mlo = _masses(raw1, raw2, l1, lo, vol)[1]
        mhi = _masses(raw1, raw2, l1, hi, vol)[1]
        width = 0.1
        while mlo < m2 and width < 16 * span:
            width *= 4.0
            lo = guess - width
            mlo = _masses(raw1, raw2, l1, lo, vol)[1]
        while mhi > m2 and width < 16 * span:
            width *= 4.0
            hi = guess + width
            mhi = _masses(raw1, raw2, l1, hi, vol)[1]
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            mm = _masses(raw1, raw2, l1, mid, vol)[1]
            if abs(mm - m2) <= MASS_BISECTION_RTOL * m2:
                return mid
            if mm > m2:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    g1, g2 = warm if warm is not None else (0.0, 0.0)
    lo, hi = bracket(g1, 0.1)
    l2lo = solve_l2(lo, g2)
    m1lo = _masses(raw1, raw2, lo, l2lo, vol)[0]
    width = 0.1
    while m1lo < m1 and width < 16 * span:
        width *= 4.0
        lo = g1 - width
        l2lo = solve_l2(lo, g2)
        m1lo = _masses(raw1, raw2, lo, l2lo, vol)[0]
    l2hi = solve_l2(hi, g2)
    m1hi = _masses(raw1, raw2, hi, l2hi, vol)[0]
    while m1hi > m1 and width < 16 * span:
        width *= 4.0
        hi = g1 + width
        l2hi = solve_l2(hi, g2)
        m1hi = _masses(raw1, raw2, hi, l2hi, vol)[0]

    l1 = 0.5 * (lo + hi)
    l2 = g2
    for _ in range(100):
        l1 = 0.5 * (lo + hi)
        l2 = solve_l2(l1, l2)
        mm = _masses(raw1, raw2, l1, l2, vol)[0]
        if abs(mm - m1) <= MASS_BISECTION_RTOL * m1:
            break
        if mm > m1:
            lo = l1
        else:
            hi = l1
    _, _, x, y = _masses(raw1, raw2, l1, l2, vol)
    # pin the masses to the targets; the correction is within bisection noise
    x = x * (m1 / (x.sum() * vol))
    y = y * (m2 / (y.sum() * vol))
    x = np.clip(x, 0.0, 1.0)
    y = np.clip(y, 0.0, 1.0 - x)
    return x, y, (l1, l2)


def _operator_norm(spec, grid):
    _, Wf = offset_weights(spec, grid)
    return grid.cell_volume * float(np.abs(Wf).max())


def _initial_step(config):
    c_eff = max(abs(config.c11), abs(config.c22), 0.0) + 1.0
    return 1.0 / (2.0 * c_eff * max(_operator_norm(config.kernel, config.grid), 1e-12))


def _mixed_ball_init(config):
    total = config.m1 + config.m2
    grid = config.grid
    from .field import _mass_matched_coverage

    R = ball_radius(total, grid.dim)
    cov = _mass_matched_coverage(grid, (0.0,) * grid.dim, R, total)
    a1 = config.m1 / total
    return a1 * cov, (1.0 - a1) * cov


def _random_init(config, rng):
    """Random bumps on a flat pedestal in the central part of the box.

    The pedestal guarantees the projection multipliers stay nonnegative, so
    no mass is sprayed outside the window (which would trip the truncation
    monitor on the first iteration).
    """
    grid = config.grid
    mesh = grid.meshgrid()
    window = np.ones(grid.cells, dtype=bool)
    for a in range(grid.dim):
        lo, hi = grid.bounds(a)
        margin = 0.15 * (hi - lo)
        window &= (mesh[a] > lo + margin) & (mesh[a] < hi - margin)
    vol = grid.cell_volume
    win_capacity = window.sum() * vol
    total = config.m1 + config.m2
    if win_capacity <= total:
        window = np.ones(grid.cells, dtype=bool)
        win_capacity = grid.capacity
    lift = min(1.3, 0.9 * win_capacity / total)
    p1 = lift * config.m1 / win_capacity
    p2 = lift * config.m2 / win_capacity
    headroom = max(1.0 - (p1 + p2), 0.05)
    raws = []
    for _ in range(2):
        bumps = np.zeros(grid.cells)
        for _ in range(4):
            center = []
            for a in range(grid.dim):
                lo, hi = grid.bounds(a)
                mid, half = 0.5 * (lo + hi), 0.2 * (hi - lo)
                center.append(rng.uniform(mid - half, mid + half))
            width = rng.uniform(0.05, 0.15) * (grid.cells[0] * grid.h)
            d2 = sum((mesh[a] - center[a]) ** 2 for a in range(grid.dim))
            bumps += rng.uniform(0.5, 1.5) * np.exp(-0.5 * d2 / width**2)
        bumps *= 0.45 * headroom / max(bumps.max(), 1e-30)
        raws.append(bumps)
    raw1 = (p1 + raws[0]) * window
    raw2 = (p2 + raws[1]) * window
    return raw1, raw2


def _initial_values(config, rng):
    if config.init == "from_files":
        from .field import read_field

        f1 = read_field(config.init_files[0])
        f2 = read_field(config.init_files[1])
        return f1.values.copy(), f2.values.copy()
    if config.init == "random":
        return _random_init(config, rng)
    if config.init == "mixed_ball":
        return _mixed_ball_init(config)
    if config.init == "analytic":
        regime = classify_regime(
            config.c11, config.c22, config.m1, config.m2,
            config.grid.dim, config.kernel.kind,
        )
        if regime.has_closed_form:
            try:
                pair, _ = analytic_minimizer(
                    regime, config.c11, config.c22, config.m1, config.m2, config.grid
                )
                return pair.f1.values.copy(), pair.f2.values.copy()
            except AnalyticError:
                pass
        return _mixed_ball_init(config)
    raise SolverError(f"unknown init {config.init!r}")


def _barycenter(values, grid):
    w = values.sum()
    if w <= 0:
        return np.zeros(grid.dim)
    mesh = grid.meshgrid()
    return np.array([(values * mesh[a]).sum() / w for a in range(grid.dim)])


def _roll(values, shift):
    out = values
    for a, s in enumerate(shift):
        if s:
            out = np.roll(out, s, axis=a)
    return out


def minimize(config):
    """Run projected-gradient descent; returns the final pair and trace."""
    if config.c11 > 0 or config.c22 > 0:
        raise SolverError("solver refuses positive self-interaction coefficients")
    grid, spec = config.grid, config.kernel
    vol = grid.cell_volume
    if config.m1 + config.m2 > grid.capacity * (1.0 - 1e-12):
        raise InfeasibleError("masses exceed grid capacity")
    rng = np.random.default_rng(config.seed)
    c11, c22, m1, m2 = config.c11, config.c22, config.m1, config.m2

    def evaluate(v1, v2):
        V1 = potential_values(v1, grid, spec)
        V2 = potential_values(v2, grid, spec)
        e = vol * (c11 * (v1 * V1).sum() + c22 * (v2 * V2).sum() - 2.0 * (v1 * V2).sum())
        return float(e), V1, V2

    raw1, raw2 = _initial_values(config, rng)
    warm = None
    v1, v2, warm = project_admissible(raw1, raw2, m1, m2, grid, warm)
    E, V1, V2 = evaluate(v1, v2)
    trace = [E]

    if config.step_rule[0] == "fixed":
        tau0, beta, armijo = float(config.step_rule[1]), None, 0.0
    else:
        _, beta, armijo = config.step_rule
        tau0 = _initial_step(config)
    tau = tau0
    status = "max_iters"
    iterations = 0
    pg_norm = np.inf
    limit = BOUNDARY_MASS_FRACTION * (m1 + m2)

    for it in range(1, config.max_iters + 1):
        iterations = it
        W1 = 2.0 * (c11 * V1 - V2)
        W2 = 2.0 * (c22 * V2 - V1)

        accepted = False
        tau = min(tau * 2.0, tau0) if beta is not None else tau0
        for _ in range(40):
            t1, t2, warm_try = project_admissible(
                v1 - tau * W1, v2 - tau * W2, m1, m2, grid, warm
            )
            step_sq = ((t1 - v1) ** 2 + (t2 - v2) ** 2).sum() * vol
            E_try, V1_try, V2_try = evaluate(t1, t2)
            if beta is None:
                accepted = True
            else:
                accepted = E_try <= E - armijo * step_sq / max(tau, 1e-30)
            if accepted:
                break
            tau *= beta
            if tau < 1e-14 * tau0:
                break

        pg_norm = np.sqrt(step_sq) / max(tau, 1e-30)
        if accepted and E_try <= E + 1e-12 * abs(E):
            rel_dec = (E - E_try) / max(abs(E_try), 1e-12)
            v1, v2, warm = t1, t2, warm_try
            E, V1, V2 = E_try, V1_try, V2_try
            trace.append(E)
        else:
            # no descent direction survives backtracking: numerically stationary
            status = "converged"
            break

        # exact block minimization when a self coefficient vanishes
        if config.block_fill_every and it % config.block_fill_every == 0:
            changed = False
            if c11 == 0.0:
                fill = bathtub_fill(DensityField(grid, v2), m1, spec)
                E_f, V1_f, V2_f = evaluate(fill.values, v2)
                if E_f < E - 1e-15 * abs(E):
                    v1, E, V1, V2 = fill.values, E_f, V1_f, V2_f
                    trace.append(E)
                    changed = True
            if c22 == 0.0:
                fill = bathtub_fill(DensityField(grid, v1), m2, spec)
                E_f, V1_f, V2_f = evaluate(v1, fill.values)
                if E_f < E - 1e-15 * abs(E):
                    v2, E, V1, V2 = fill.values, E_f, V1_f, V2_f
                    trace.append(E)
                    changed = True
            if changed:
                rel_dec = max(rel_dec, config.energy_tol)

        edge = DensityField(grid, v1).boundary_mass() + DensityField(grid, v2).boundary_mass()
        if edge >= limit:
            status = "boundary_mass_violation"
            break

        if config.recenter_every and it % config.recenter_every == 0:
            b = _barycenter(v1 + v2, grid)
            shift = tuple(-int(round(bb / grid.h)) for bb in b)
            if any(shift):
                v1s, v2s = _roll(v1, shift), _roll(v2, shift)
                E_s, V1_s, V2_s = evaluate(v1s, v2s)
                if E_s <= E + 1e-10 * abs(E):
                    v1, v2, E, V1, V2 = v1s, v2s, E_s, V1_s, V2_s

        if rel_dec < config.energy_tol and pg_norm < config.stat_tol:
            status = "converged"
            break

    pair = PhasePair(DensityField(grid, v1), DensityField(grid, v2), c11, c22, m1, m2)
    stat = diagnostics_record(pair, spec)
    return SolverResult(pair, tuple(trace), iterations, status, stat, E)


def minimize_multistart(config, n_starts=5, seeds=None):
    """Best-of-n minimize with varied random seeds (first start keeps init)."""
    if seeds is None:
        seeds = [config.seed + k for k in range(n_starts)]
    best = None
    for k, seed in enumerate(seeds):
        cfg = replace(config, seed=seed)
        if k > 0:
            cfg = replace(cfg, init="random")
        res = minimize(cfg)
        if best is None or res.I_value < best.I_value:
            best = res
    return best


def center(pair):
    """Integer-cell shift putting the joint barycenter next to the origin."""
    grid = pair.grid
    b = _barycenter(pair.f1.values + pair.f2.values, grid)
    shift = tuple(-int(round(bb / grid.h)) for bb in b)
    if not any(shift):
        return pair
    return PhasePair(
        DensityField(grid, _roll(pair.f1.values, shift)),
        DensityField(grid, _roll(pair.f2.values, shift)),
        pair.c11, pair.c22, pair.m1, pair.m2, pair.diagnostic,
    )


def compare(pair, reference, search_radius=6):
    """L1 distance to a reference pair, minimized over integer shifts.

    The shift search is seeded by the barycenter offset and scans a cube of
    the given radius around it; in 1D the mirrored pair is also tried.
    Returns (l1_distance, best_shift, best_reflection).
    """
    grid = pair.grid
    if not grid.compatible(reference.grid):
        raise FieldError("compare requires a shared grid")
    vol = grid.cell_volume
    g1, g2 = reference.f1.values, reference.f2.values
    b_ref = _barycenter(g1 + g2, grid)

    def scan(v1, v2):
        b = _barycenter(v1 + v2, grid)
        seed = np.round((b_ref - b) / grid.h).astype(int)
        best = (np.inf, None)
        offsets = itertools.product(
            *[range(-search_radius, search_radius + 1)] * grid.dim
        )
        for off in offsets:
            shift = tuple(seed[a] + off[a] for a in range(grid.dim))
            l1 = (
                np.abs(_roll(v1, shift) - g1).sum()
                + np.abs(_roll(v2, shift) - g2).sum()
            ) * vol
            if l1 < best[0]:
                best = (l1, shift)
        return best

    l1, shift = scan(pair.f1.values, pair.f2.values)
    reflected = False
    if grid.dim == 1:
        l1_m, shift_m = scan(pair.f1.values[::-1], pair.f2.values[::-1])
        if l1_m < l1:
            l1, shift, reflected = l1_m, shift_m, True
    return float(l1), shift, reflected


def sweep(points, m1, m2, kernel, base_config):
    """Solve a batch of (c11, c22) points; failures are recorded per row."""
    rows = []
    for c11, c22 in points:
        row = {"c11": c11, "c22": c22}
        if c11 > 0 or c22 > 0:
            row.update(status="refused", energy=None, regime=None,
                       l1_to_analytic=None)
            rows.append(row)
            continue
        try:
            cfg = replace(base_config, c11=c11, c22=c22, m1=m1, m2=m2)
            regime = classify_regime(
                c11, c22, m1, m2, cfg.grid.dim, kernel.kind
            )
            res = minimize_multistart(cfg, n_starts=1 if regime.has_closed_form else 3)
            row["energy"] = res.I_value
            row["status"] = res.status
            row["regime"] = regime.label
            row["l1_to_analytic"] = None
            if regime.has_closed_form:
                ref, _ = analytic_minimizer(regime, c11, c22, m1, m2, cfg.grid)
                row["l1_to_analytic"] = compare(res.pair, ref)[0]
                row["analytic_energy"] = energy(ref, kernel).total
            regions = region_decomposition(res.pair)
            mixed = regions.G1 & regions.G2
            row["mixed_cells"] = int(mixed.sum())
            if mixed.any():
                row["mixed_mean_f1"] = float(res.pair.f1.values[mixed].mean())
        except SolverError as exc:
            row.update(status=f"error: {exc}", energy=None, regime=None,
                       l1_to_analytic=None)
        rows.append(row)
    return rows


def tangent_pair(m1, m2, grid, c11=-2.0, c22=-2.0):
    """Two tangent unit-density balls along the first axis, barycentered."""
    from .field import _mass_matched_coverage

    r1 = ball_radius(m1, grid.dim)
    r2 = ball_radius(m2, grid.dim)
    sep = r1 + r2
    total = m1 + m2
    c1 = -sep * m2 / total
    c2 = sep * m1 / total
    center1 = (c1,) + (0.0,) * (grid.dim - 1)
    center2 = (c2,) + (0.0,) * (grid.dim - 1)
    cov1 = _mass_matched_coverage(grid, center1, r1, m1)
    cov2 = _mass_matched_coverage(grid, center2, r2, m2)
    overlap = np.maximum(cov1 + cov2 - 1.0, 0.0)
    if overlap.max(initial=0.0) > 0:
        cov1 = cov1 - 0.5 * overlap
        cov2 = cov2 - 0.5 * overlap
        vol = grid.cell_volume
        cov1 *= m1 / (cov1.sum() * vol)
        cov2 = np.minimum(cov2, 1.0 - cov1)
        cov2 *= m2 / (cov2.sum() * vol)
    return PhasePair(
        DensityField(grid, cov1), DensityField(grid, cov2), c11, c22, m1, m2
    )


def tangent_ball_study(c_list, m1, m2, grid, kernel, base_config=None):
    """Track the distance to two tangent balls as both coefficients harden."""
    if any(c >= -1.0 for c in c_list):
        raise SolverError("tangent-ball study requires coefficients < -1")
    rows = []
    for c in c_list:
        ref = tangent_pair(m1, m2, grid, c, c)
        cfg = SolverConfig(grid=grid, kernel=kernel, c11=c, c22=c, m1=m1, m2=m2)
        if base_config is not None:
            cfg = replace(
                base_config, c11=c, c22=c, m1=m1, m2=m2, grid=grid, kernel=kernel
            )
        cfg = replace(cfg, init="from_pair")
        res = _minimize_from_pair(cfg, ref)
        l1, _, _ = compare(res.pair, ref)
        b1 = _barycenter(res.pair.f1.values, grid)
        b2 = _barycenter(res.pair.f2.values, grid)
        rows.append(
            {
                "c": c,
                "energy": res.I_value,
                "status": res.status,
                "l1_to_tangent": l1,
                "barycenter_separation": float(np.linalg.norm(b1 - b2)),
                "tangency_distance": ball_radius(m1, grid.dim)
                + ball_radius(m2, grid.dim),
            }
        )
    return rows


def _minimize_from_pair(config, pair):
    import os
    import tempfile

    from .field import write_field

    with tempfile.TemporaryDirectory() as d:
        p1 = os.path.join(d, "f1.df")
        p2 = os.path.join(d, "f2.df")
        write_field(pair.f1, p1)
        write_field(pair.f2, p2)
        cfg = replace(config, init="from_files", init_files=(p1, p2))
        return minimize(cfg)
