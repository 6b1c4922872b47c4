"""The two-species objective, its variations and stationarity diagnostics.

E(f1, f2) = c11 J(f1,f1) + c22 J(f2,f2) - 2 J(f1,f2), with the cross
coefficient normalized to -2. Gradients with respect to the two densities
are W1 = 2 (c11 V1 - V2) and W2 = 2 (c22 V2 - V1).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import (
    DensityField,
    FieldError,
    PhasePair,
    region_decomposition,
)
from .kernel import PotentialField, interaction, potential, potential_values

STAT_NORMALIZER_FLOOR = 1e-12


class EnergyError(ValueError):
    """Raised on invalid energy evaluations."""


@dataclass(frozen=True)
class EnergyBreakdown:
    j11: float
    j22: float
    j12: float
    total: float

    def as_dict(self):
        return {"j11": self.j11, "j22": self.j22, "j12": self.j12, "total": self.total}


@dataclass(frozen=True)
class VariationFields:
    """Cell-wise energy gradients and per-region stationarity statistics."""

    W1: PotentialField
    W2: PotentialField
    gamma_candidates: dict = dc_field(default_factory=dict)


def energy(pair, spec):
    j11 = interaction(pair.f1, pair.f1, spec)
    j22 = interaction(pair.f2, pair.f2, spec)
    j12 = interaction(pair.f1, pair.f2, spec)
    total = pair.c11 * j11 + pair.c22 * j22 - 2.0 * j12
    return EnergyBreakdown(j11, j22, j12, total)


def energy_identity_check(pair, spec):
    """|E(f1,f2) + J(f1+f2, f1+f2)| at c11 = c22 = -1."""
    if pair.c11 != -1.0 or pair.c22 != -1.0:
        raise EnergyError("identity holds only for c11 = c22 = -1")
    e = energy(pair, spec).total
    s = DensityField(pair.grid, pair.f1.values + pair.f2.values)
    return abs(e + interaction(s, s, spec))


def potentials(pair, spec):
    return potential(pair.f1, spec), potential(pair.f2, spec)


def first_variation(pair, spec):
    V1, V2 = potentials(pair, spec)
    W1 = 2.0 * (pair.c11 * V1.values - V2.values)
    W2 = 2.0 * (pair.c22 * V2.values - V1.values)
    return VariationFields(
        PotentialField(pair.grid, W1, pair.m1),
        PotentialField(pair.grid, W2, pair.m2),
    )


@dataclass(frozen=True)
class SecondVariation:
    value: float
    prefactor: float
    quad_form: float

    @property
    def sign(self):
        if self.value > 0:
            return 1
        return -1 if self.value < 0 else 0


def second_variation_form(pair, phi, spec, mix_tolerance=None):
    """(c11 + c22 + 2) J(φ, φ) for zero-mean φ supported in G1 ∩ G2."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != pair.grid.cells:
        raise EnergyError("perturbation shape does not match the grid")
    vol = pair.grid.cell_volume
    if abs(phi.sum() * vol) > 1e-10 * max(1.0, np.abs(phi).sum() * vol):
        raise EnergyError("perturbation must have zero mean")
    kwargs = {} if mix_tolerance is None else {"mix_tolerance": mix_tolerance}
    regions = region_decomposition(pair, **kwargs)
    mixed = regions.G1 & regions.G2
    if np.any((phi != 0.0) & ~mixed):
        raise EnergyError("perturbation must be supported in G1 ∩ G2")
    Vphi = potential_values(phi, pair.grid, spec)
    quad = float((phi * Vphi).sum() * vol)
    pref = pair.c11 + pair.c22 + 2.0
    return SecondVariation(pref * quad, pref, quad)


def _region_stat(combo, mask, regressors=()):
    if not mask.any():
        return None
    vals = combo[mask]
    mean = float(vals.mean())
    resid = vals - mean
    if regressors and vals.size > len(regressors) + 2:
        # remove the sub-cell interface offset encoded by the fractional
        # coverage of the fringe cells before measuring constancy
        A = np.stack([np.ones(vals.size)] + [r[mask] for r in regressors], axis=1)
        coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
        resid = vals - A @ coef
    std = float(resid.std())
    return {
        "mean": mean,
        "std": std,
        "deviation": std / max(abs(mean), STAT_NORMALIZER_FLOOR),
        "cells": int(mask.sum()),
    }


def _boundary_band(mask, width=1):
    """Cells within ``width`` cells of the boundary of a set (either side)."""
    from scipy import ndimage

    band = np.zeros_like(mask)
    for axis in range(mask.ndim):
        diff = np.diff(mask.astype(np.int8), axis=axis) != 0
        lo = [slice(None)] * mask.ndim
        hi = [slice(None)] * mask.ndim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        band[tuple(lo)] |= diff
        band[tuple(hi)] |= diff
    if width > 1:
        band = ndimage.binary_dilation(band, iterations=width - 1)
    return band


def stationarity_report(pair, spec, regions=None):
    """Constancy of the first-variation combinations on each region.

    For each applicable region the report carries the mean, standard
    deviation and normalized deviation of the corresponding affine
    combination of the potentials. Empty regions are marked not-applicable.
    """
    if regions is None:
        regions = region_decomposition(pair)
    V1, V2 = potentials(pair, spec)
    v1, v2 = V1.values, V2.values
    c11, c22 = pair.c11, pair.c22

    from scipy import ndimage

    f1v, f2v = pair.f1.values, pair.f2.values
    support1 = f1v > regions.mix_tolerance
    support2 = f2v > regions.mix_tolerance
    layer1 = support1 & ~ndimage.binary_erosion(support1)
    layer2 = support2 & ~ndimage.binary_erosion(support2)
    near1 = ndimage.binary_dilation(support1, iterations=3)
    near2 = ndimage.binary_dilation(support2, iterations=3)
    interface = _boundary_band(support1, width=2) | _boundary_band(support2, width=2)

    # interior statistics exclude the smeared interface bands; the level-set
    # conditions on each kind of support boundary are reported separately
    combos = {
        "g1_pure": (c11 * v1 - v2, regions.G1 & ~regions.S & ~interface, ()),
        "g2_pure": (c22 * v2 - v1, regions.G2 & ~regions.S & ~interface, ()),
        "mixed": (
            (c11 + 1.0) * v1 - (c22 + 1.0) * v2,
            regions.G1 & regions.G2 & ~interface,
            (),
        ),
        "boundary_1_only": (c11 * v1 - v2, layer1 & ~near2, (f1v,)),
        "boundary_2_only": (c22 * v2 - v1, layer2 & ~near1, (f2v,)),
        "boundary_shared": (
            (c11 + 1.0) * v1 - (c22 + 1.0) * v2,
            (layer1 & near2) | (layer2 & near1),
            (f1v, f2v),
        ),
    }

    report = {}
    for name, (combo, mask, regressors) in combos.items():
        stat = _region_stat(combo, mask, regressors)
        report[name] = stat if stat is not None else "not-applicable"
    return report


def diagnostics_record(pair, spec, regions=None):
    """JSON-ready record: energy breakdown, region deviations, boundary mass."""
    bd = energy(pair, spec)
    rec = bd.as_dict()
    rec["regions"] = stationarity_report(pair, spec, regions)
    rec["boundary_mass"] = pair.f1.boundary_mass() + pair.f2.boundary_mass()
    rec["boundary_mass_ok"] = pair.boundary_mass_ok()
    return rec


def bathtub_fill(f2, m1, spec):
    """Optimal f1 at c11 = 0: fill 1 - f2 on the top superlevels of V2.

    Cells are filled in decreasing V2 order (ties by ascending cell index);
    the cell crossing the mass budget is filled fractionally.
    """
    grid = f2.grid
    vol = grid.cell_volume
    if m1 < 0:
        raise EnergyError("mass must be nonnegative")
    if m1 == 0:
        return DensityField(grid, np.zeros(grid.cells))
    room = 1.0 - f2.values
    if m1 > room.sum() * vol * (1.0 + 1e-12):
        raise EnergyError(f"mass {m1} does not fit beside the fixed phase")
    V2 = potential(f2, spec).values
    if np.allclose(V2, 0.0, atol=1e-15):
        raise EnergyError("degenerate input: V2 vanishes, no superlevel ordering")
    order = np.lexsort((np.arange(V2.size), -V2.ravel()))
    room_flat = room.ravel()[order]
    cum = np.cumsum(room_flat) * vol
    out = np.zeros(V2.size)
    k = int(np.searchsorted(cum, m1 * (1.0 - 1e-15)))
    out[order[:k]] = room_flat[:k]
    filled = cum[k - 1] if k > 0 else 0.0
    if k < out.size:
        out[order[k]] = (m1 - filled) / vol
    vals = out.reshape(grid.cells)
    return DensityField(grid, np.clip(vals, 0.0, room))
