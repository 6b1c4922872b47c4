"""Regime classification and closed-form minimizer construction.

Covers every coefficient regime with a known explicit minimizer: the
degenerate family at (-1, -1), nested and concentric ball/annulus
configurations, tangent intervals in 1D, balanced mixing for positive
definite kernels, and the Coulomb mixed core + annulus shapes.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import (
    DensityField,
    FieldError,
    Grid,
    PhasePair,
    UNIT_BALL_VOLUME,
    _mass_matched_coverage,
    ball_volume,
)

BALANCE_RTOL = 1e-9

CLOSED_FORM_LABELS = (
    "mixed_ball_balanced",
    "coulomb_mixed_core_annulus_i",
    "coulomb_mixed_core_annulus_ii",
    "degenerate_equal_minus_one",
    "nested_free_ball_12",
    "nested_free_ball_21",
    "ball_annulus_12",
    "ball_annulus_21",
    "tangent_intervals_1d",
)
OPEN_LABELS = ("open_segregated", "unknown")


class AnalyticError(ValueError):
    """Raised for regimes without a closed form or invalid parameters."""


@dataclass(frozen=True)
class Regime:
    label: str
    witnesses: tuple = ()

    @property
    def has_closed_form(self):
        return self.label in CLOSED_FORM_LABELS


@dataclass(frozen=True)
class RadialPiece:
    center: tuple
    inner_radius: float
    outer_radius: float
    phase1_density: float
    phase2_density: float


@dataclass(frozen=True)
class AnalyticMinimizer:
    pieces: tuple
    free_parameters: str

    def as_dict(self):
        return {
            "pieces": [
                {
                    "center": list(p.center),
                    "inner_radius": p.inner_radius,
                    "outer_radius": p.outer_radius,
                    "phase1_density": p.phase1_density,
                    "phase2_density": p.phase2_density,
                }
                for p in self.pieces
            ],
            "free_parameters": self.free_parameters,
        }


def ball_radius(mass, dim):
    """Radius of the ball of given volume: (mass / ω_dim)^(1/dim)."""
    if mass <= 0:
        raise AnalyticError("mass must be positive")
    return (mass / UNIT_BALL_VOLUME[dim]) ** (1.0 / dim)


def mixing_fractions(c11, c22):
    """Volume fractions of the two phases in a mixing region."""
    denom = c11 + c22 + 2.0
    if denom <= 0:
        raise AnalyticError("mixing fractions undefined for c11 + c22 <= -2")
    return (c22 + 1.0) / denom, (c11 + 1.0) / denom


def _balanced(c11, c22, m1, m2):
    lhs = (c11 + 1.0) * m1
    rhs = (c22 + 1.0) * m2
    return abs(lhs - rhs) <= BALANCE_RTOL * max(abs(lhs), abs(rhs), 1e-300)


def classify_regime(c11, c22, m1, m2, dim, kernel_kind, positive_definite=None):
    """Pick the closed-form regime containing (c11, c22), or an open label.

    ``positive_definite`` overrides the balanced-mixing gate for kernels
    whose definiteness is not implied by ``kernel_kind`` alone (tabulated).
    """
    if c11 > 0 or c22 > 0:
        raise AnalyticError("classification requires c11, c22 <= 0")
    w = []
    coulomb = kernel_kind == "coulomb"
    if positive_definite is None:
        positive_definite = kernel_kind == "gaussian" or (coulomb and dim == 3)

    if c11 == -1.0 and c22 == -1.0:
        return Regime("degenerate_equal_minus_one", ("c11 == c22 == -1",))

    if c11 + c22 <= -2.0:
        w.append("c11 + c22 <= -2")
        if c11 == -1.0 and c22 < -1.0:
            return Regime("nested_free_ball_21", tuple(w) + ("c11 == -1 > c22",))
        if c22 == -1.0 and c11 < -1.0:
            return Regime("nested_free_ball_12", tuple(w) + ("c22 == -1 > c11",))
        if c22 < -1.0 < c11 <= 0.0:
            return Regime("ball_annulus_21", tuple(w) + ("c22 < -1 < c11",))
        if c11 < -1.0 < c22 <= 0.0:
            return Regime("ball_annulus_12", tuple(w) + ("c11 < -1 < c22",))
        # both strictly below -1
        if dim == 1:
            return Regime("tangent_intervals_1d", tuple(w) + ("dim == 1",))
        return Regime("open_segregated", tuple(w) + ("c11, c22 < -1, dim >= 2",))

    w.append("c11 + c22 > -2")
    if c22 <= -1.0 or c11 <= -1.0:
        # one strong phase; closed form known for the Coulomb kernel
        if coulomb:
            if c22 <= -1.0:
                return Regime("ball_annulus_21", tuple(w) + ("c22 <= -1, coulomb",))
            return Regime("ball_annulus_12", tuple(w) + ("c11 <= -1, coulomb",))
        return Regime("unknown", tuple(w) + ("one strong phase, non-coulomb",))

    # purely weakly attractive: -1 < c11, c22 <= 0
    if _balanced(c11, c22, m1, m2) and positive_definite:
        return Regime(
            "mixed_ball_balanced",
            tuple(w) + ("(c11+1) m1 == (c22+1) m2", "positive definite kernel"),
        )
    if coulomb:
        if (c22 + 1.0) * m2 >= (c11 + 1.0) * m1:
            return Regime(
                "coulomb_mixed_core_annulus_i",
                tuple(w) + ("(c22+1) m2 >= (c11+1) m1", "coulomb"),
            )
        return Regime(
            "coulomb_mixed_core_annulus_ii",
            tuple(w) + ("(c11+1) m1 > (c22+1) m2", "coulomb"),
        )
    return Regime("unknown", tuple(w) + ("weakly attractive, non-coulomb",))


def _rasterize_pieces(pieces, grid):
    """Turn radial annular pieces into a pair of density arrays with exact
    per-piece mass matching."""
    v1 = np.zeros(grid.cells)
    v2 = np.zeros(grid.cells)
    for p in pieces:
        outer_vol = ball_volume(p.outer_radius, grid.dim)
        cov = _mass_matched_coverage(grid, p.center, p.outer_radius, outer_vol)
        if p.inner_radius > 0:
            inner_vol = ball_volume(p.inner_radius, grid.dim)
            cov = cov - _mass_matched_coverage(
                grid, p.center, p.inner_radius, inner_vol
            )
            cov = np.clip(cov, 0.0, 1.0)
        v1 += p.phase1_density * cov
        v2 += p.phase2_density * cov
    return v1, v2


def _check_fits(grid, radius, center=None):
    center = center if center is not None else (0.0,) * grid.dim
    for a in range(grid.dim):
        lo, hi = grid.bounds(a)
        if center[a] - radius < lo or center[a] + radius > hi:
            raise AnalyticError(
                f"configuration of radius {radius:.4g} does not fit in the box"
            )


def _exact_masses(v1, v2, grid, m1, m2):
    """Rescale tiny rasterization residuals so the cached masses are exact."""
    vol = grid.cell_volume
    out = []
    for v, m in ((v1, m1), (v2, m2)):
        s = v.sum() * vol
        if s <= 0:
            raise AnalyticError("rasterized phase has no mass")
        if abs(s - m) > 1e-6 * m:
            raise AnalyticError(f"rasterized mass {s} too far from target {m}")
        out.append(v * (m / s))
    v1, v2 = out
    overshoot = np.maximum(v1 + v2 - 1.0, 0.0)
    if overshoot.max(initial=0.0) > 0:
        # shave the joint overshoot proportionally; reinstate masses after
        scale = 1.0 / (1.0 + overshoot.max())
        v1, v2 = v1 * scale, v2 * scale
        v1 *= m1 / (v1.sum() * vol)
        v2 *= m2 / (v2.sum() * vol)
        if (v1 + v2).max() > 1.0 + 1e-12:
            raise AnalyticError("cannot reconcile masses with the sum constraint")
    return v1, v2


def analytic_minimizer(regime, c11, c22, m1, m2, grid):
    """Rasterize the closed-form minimizer for a solved regime.

    Returns (PhasePair, AnalyticMinimizer). Non-unique regimes use the
    canonical concentric / fully mixed representative.
    """
    if isinstance(regime, str):
        regime = Regime(regime)
    if not regime.has_closed_form:
        raise AnalyticError(
            f"regime {regime.label!r} has no closed form; run the solver"
        )
    label = regime.label
    origin = (0.0,) * grid.dim
    total = m1 + m2
    free = "translation of the whole configuration"

    if label == "tangent_intervals_1d":
        if grid.dim != 1:
            raise AnalyticError("tangent intervals are one dimensional")
        return _tangent_intervals(c11, c22, m1, m2, grid)

    if label == "degenerate_equal_minus_one":
        a1 = m1 / total
        R = ball_radius(total, grid.dim)
        pieces = (RadialPiece(origin, 0.0, R, a1, 1.0 - a1),)
        free = "any split of the unit ball into f1 + f2 = 1; fully degenerate"
    elif label in ("nested_free_ball_12", "nested_free_ball_21", "ball_annulus_12", "ball_annulus_21"):
        inner_is_1 = label.endswith("12")
        m_in = m1 if inner_is_1 else m2
        r_in = ball_radius(m_in, grid.dim)
        R = ball_radius(total, grid.dim)
        d_in = (1.0, 0.0) if inner_is_1 else (0.0, 1.0)
        d_out = (0.0, 1.0) if inner_is_1 else (1.0, 0.0)
        pieces = (
            RadialPiece(origin, 0.0, r_in, *d_in),
            RadialPiece(origin, r_in, R, *d_out),
        )
        if label.startswith("nested_free_ball"):
            free = "inner ball may sit anywhere inside the outer ball"
    elif label == "mixed_ball_balanced":
        a1, a2 = mixing_fractions(c11, c22)
        R = ball_radius(total, grid.dim)
        pieces = (RadialPiece(origin, 0.0, R, a1, a2),)
    elif label in ("coulomb_mixed_core_annulus_i", "coulomb_mixed_core_annulus_ii"):
        a1, a2 = mixing_fractions(c11, c22)
        if label.endswith("_i"):
            core_vol = m1 / a1
            core = (a1, 1.0 - a1)
            annulus = (0.0, 1.0)
        else:
            core_vol = m2 / a2
            core = (1.0 - a2, a2)
            annulus = (1.0, 0.0)
        if core_vol > total * (1.0 + 1e-12):
            raise AnalyticError("mixed core exceeds the total volume")
        core_vol = min(core_vol, total)
        r_core = ball_radius(core_vol, grid.dim)
        R = ball_radius(total, grid.dim)
        pieces = (RadialPiece(origin, 0.0, r_core, *core),)
        if R > r_core * (1.0 + 1e-12):
            pieces = pieces + (RadialPiece(origin, r_core, R, *annulus),)
    else:  # pragma: no cover
        raise AnalyticError(f"unhandled closed-form label {label!r}")

    _check_fits(grid, max(p.outer_radius for p in pieces))
    v1, v2 = _rasterize_pieces(pieces, grid)
    v1, v2 = _exact_masses(v1, v2, grid, m1, m2)
    pair = PhasePair(
        DensityField(grid, v1), DensityField(grid, v2), c11, c22, m1, m2
    )
    return pair, AnalyticMinimizer(pieces, free)


def _tangent_intervals(c11, c22, m1, m2, grid):
    x = grid.axis_coords(0)
    h = grid.h
    lo, hi = grid.bounds(0)
    if -m1 < lo or m2 > hi:
        raise AnalyticError("tangent intervals do not fit in the box")

    def interval_coverage(a, b):
        left = np.clip((x + 0.5 * h) - a, 0.0, h)
        right = np.clip(b - (x - 0.5 * h), 0.0, h)
        return np.minimum(left, right).clip(0.0, h) / h

    v1 = interval_coverage(-m1, 0.0)
    v2 = interval_coverage(0.0, m2)
    v1, v2 = _exact_masses(v1, v2, grid, m1, m2)
    pair = PhasePair(
        DensityField(grid, v1), DensityField(grid, v2), c11, c22, m1, m2
    )
    pieces = (
        RadialPiece((-0.5 * m1,), 0.0, 0.5 * m1, 1.0, 0.0),
        RadialPiece((0.5 * m2,), 0.0, 0.5 * m2, 0.0, 1.0),
    )
    desc = AnalyticMinimizer(pieces, "translation and mirror reflection")
    return pair, desc


def degenerate_family_sample(seed, m1, m2, grid):
    """Random member of the (-1, -1) minimizing family f1 + f2 = χ_ball."""
    if m1 <= 0 or m2 <= 0:
        raise AnalyticError("masses must be positive")
    total = m1 + m2
    R = ball_radius(total, grid.dim)
    _check_fits(grid, R)
    cov = _mass_matched_coverage(grid, (0.0,) * grid.dim, R, total)
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.05, 1.0, size=grid.cells)
    vol = grid.cell_volume

    def mass1(alpha):
        return (np.minimum(alpha * weights, 1.0) * cov).sum() * vol

    lo, hi = 0.0, 1.0
    while mass1(hi) < m1:
        hi *= 2.0
        if hi > 1e9:
            raise AnalyticError("cannot fit the requested mass in the ball")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mass1(mid) < m1:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    v1 = np.minimum(alpha * weights, 1.0) * cov
    s = v1.sum() * vol
    if s > 0 and abs(s - m1) > 0:
        # exact mass via a tiny uniform shave on the strictly interior values
        v1 = v1 * (m1 / s)
        v1 = np.minimum(v1, cov)
        v1 *= m1 / (v1.sum() * vol)
        v1 = np.minimum(v1, cov)
    v2 = cov - v1
    if (v1 + v2).max() > 1.0 + 1e-12:
        raise AnalyticError("degenerate sample violates the sum constraint")
    return PhasePair(
        DensityField(grid, v1), DensityField(grid, v2), -1.0, -1.0, m1, m2
    )
