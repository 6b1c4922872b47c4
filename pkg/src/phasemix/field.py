"""Grids, density fields, admissible phase pairs and field I/O.

All fields live on a uniform Cartesian grid over a box in R^N (N = 1, 2, 3).
Values are immutable after construction; every operation returns new objects.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field as dc_field
from itertools import product

import numpy as np

VALUE_TOL = 1e-12
MASS_RTOL = 1e-9
DEFAULT_MIX_TOL = 1e-3
BOUNDARY_MASS_FRACTION = 1e-6

UNIT_BALL_VOLUME = {1: 2.0, 2: np.pi, 3: 4.0 * np.pi / 3.0}


class FieldError(ValueError):
    """Raised on invalid field construction or incompatible grids."""


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid. ``origin`` is the center of cell index 0."""

    dim: int
    cells: tuple
    h: float
    origin: tuple

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise FieldError(f"unsupported dimension {self.dim}")
        if len(self.cells) != self.dim or any(n <= 0 for n in self.cells):
            raise FieldError(f"bad cell counts {self.cells} for dim {self.dim}")
        if self.h <= 0:
            raise FieldError("spacing must be positive")
        if len(self.origin) != self.dim:
            raise FieldError("origin dimension mismatch")
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))

    @classmethod
    def centered(cls, dim, n, h):
        """Grid of n cells per axis with the box centered at the origin."""
        o = -0.5 * (n - 1) * h
        return cls(dim, (n,) * dim, h, (o,) * dim)

    @property
    def n_cells(self):
        return int(np.prod(self.cells))

    @property
    def cell_volume(self):
        return self.h ** self.dim

    @property
    def capacity(self):
        return self.n_cells * self.cell_volume

    def axis_coords(self, axis):
        return self.origin[axis] + self.h * np.arange(self.cells[axis])

    def meshgrid(self):
        axes = [self.axis_coords(a) for a in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    def distance_sq(self, center=None):
        """Squared distance from cell centers to ``center`` (default: 0)."""
        if center is None:
            center = (0.0,) * self.dim
        d2 = np.zeros(self.cells)
        for a, x in enumerate(self.meshgrid()):
            d2 = d2 + (x - center[a]) ** 2
        return d2

    def bounds(self, axis):
        """Extent of the box along one axis, including the half-cell margins."""
        lo = self.origin[axis] - 0.5 * self.h
        hi = self.origin[axis] + (self.cells[axis] - 0.5) * self.h
        return lo, hi

    def compatible(self, other):
        return (
            self.dim == other.dim
            and self.cells == other.cells
            and abs(self.h - other.h) <= 1e-14 * self.h
            and all(abs(a - b) <= 1e-12 for a, b in zip(self.origin, other.origin))
        )


@dataclass(frozen=True)
class DensityField:
    """Nonnegative grid function with values in [0, 1] and a cached mass."""

    grid: Grid
    values: np.ndarray
    mass: float = dc_field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.cells:
            raise FieldError(
                f"value shape {vals.shape} does not match grid {self.grid.cells}"
            )
        bad = np.argwhere((vals < -VALUE_TOL) | (vals > 1.0 + VALUE_TOL))
        if bad.size:
            k = tuple(bad[0])
            raise FieldError(f"value {vals[k]} out of [0,1] at cell {k}")
        vals = np.clip(vals, 0.0, 1.0)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mass", float(vals.sum() * self.grid.cell_volume))

    def boundary_mass(self):
        """Mass in the outermost cell layer (truncation monitor)."""
        v = self.values
        if self.grid.dim == 1:
            edge = v[0] + (v[-1] if v.shape[0] > 1 else 0.0)
            return float(edge * self.grid.cell_volume)
        interior = v[tuple(slice(1, -1) for _ in range(self.grid.dim))]
        return float((v.sum() - interior.sum()) * self.grid.cell_volume)


@dataclass(frozen=True)
class PhasePair:
    """Admissible pair (f1, f2) with coefficients and declared masses."""

    f1: DensityField
    f2: DensityField
    c11: float
    c22: float
    m1: float
    m2: float
    diagnostic: bool = False

    def __post_init__(self):
        if not self.f1.grid.compatible(self.f2.grid):
            raise FieldError("phase fields live on different grids")
        if not self.diagnostic and (self.c11 > 0 or self.c22 > 0):
            raise FieldError(
                "positive self-interaction coefficients need diagnostic mode"
            )
        s = self.f1.values + self.f2.values
        if s.max(initial=0.0) > 1.0 + VALUE_TOL:
            k = tuple(np.argwhere(s > 1.0 + VALUE_TOL)[0])
            raise FieldError(f"f1+f2 = {s[k]} exceeds 1 at cell {k}")
        for f, m, name in ((self.f1, self.m1, "m1"), (self.f2, self.m2, "m2")):
            if m <= 0:
                raise FieldError(f"{name} must be positive")
            if abs(f.mass - m) > MASS_RTOL * max(1.0, abs(m)):
                raise FieldError(f"field mass {f.mass} != declared {name}={m}")

    @property
    def grid(self):
        return self.f1.grid

    def boundary_mass_ok(self, fraction=BOUNDARY_MASS_FRACTION):
        limit = fraction * (self.m1 + self.m2)
        return self.f1.boundary_mass() + self.f2.boundary_mass() < limit


@dataclass(frozen=True)
class PhaseRegions:
    """Boolean cell masks for mixed (G), saturated (F) and full (S) regions."""

    G1: np.ndarray
    G2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    S: np.ndarray
    mix_tolerance: float


def make_field(grid, profile):
    """Build a DensityField from a generator evaluated at cell centers.

    ``profile`` receives an array of shape (*cells, dim) with the cell-center
    coordinates and must return values in [0, 1] of shape ``cells``.
    """
    pts = np.stack(grid.meshgrid(), axis=-1)
    vals = np.asarray(profile(pts), dtype=float)
    if vals.shape != grid.cells:
        vals = np.broadcast_to(vals, grid.cells).copy()
    return DensityField(grid, vals)


def region_decomposition(pair, mix_tolerance=DEFAULT_MIX_TOL):
    """Split the grid into mixed, saturated and fully occupied cell sets."""
    if not 0.0 < mix_tolerance < 0.5:
        raise FieldError("mix_tolerance must lie in (0, 0.5)")
    v1, v2 = pair.f1.values, pair.f2.values
    t = mix_tolerance
    G1 = (v1 > t) & (v1 < 1.0 - t)
    G2 = (v2 > t) & (v2 < 1.0 - t)
    F1 = v1 >= 1.0 - t
    F2 = v2 >= 1.0 - t
    S = (v1 + v2) >= 1.0 - t
    return PhaseRegions(G1, G2, F1, F2, S, t)


def ball_volume(radius, dim):
    return UNIT_BALL_VOLUME[dim] * radius ** dim


def _subsample_offsets(dim, h):
    steps = (-h / 3.0, 0.0, h / 3.0)
    return np.array(list(product(steps, repeat=dim)))


def ball_coverage(grid, center, radius):
    """Fractional cell coverage of the ball of given radius around center.

    Interior/exterior cells are decided by the cell-center distance against
    the half cell diagonal; straddling cells use 3^dim subsamples.
    """
    dist = np.sqrt(grid.distance_sq(center))
    half_diag = 0.5 * grid.h * np.sqrt(grid.dim)
    cov = np.zeros(grid.cells)
    cov[dist <= radius - half_diag] = 1.0
    fringe = (dist > radius - half_diag) & (dist < radius + half_diag)
    if fringe.any():
        pts = np.stack(grid.meshgrid(), axis=-1)[fringe]
        offs = _subsample_offsets(grid.dim, grid.h)
        sub = pts[:, None, :] + offs[None, :, :]
        inside = (sub - np.asarray(center)) ** 2
        inside = inside.sum(axis=-1) <= radius * radius
        cov[fringe] = inside.mean(axis=1)
    return cov


def rasterize_ball(grid, center, mass, density):
    """Rasterize ``density`` on the ball of volume mass/density at center.

    Boundary cells carry fractional coverage; a small uniform correction on
    the fringe cells pins the total mass to high relative accuracy.
    """
    if not 0.0 < density <= 1.0:
        raise FieldError("density must lie in (0, 1]")
    if mass <= 0:
        raise FieldError("mass must be positive")
    center = tuple(float(c) for c in center)
    volume = mass / density
    radius = (volume / UNIT_BALL_VOLUME[grid.dim]) ** (1.0 / grid.dim)
    for a in range(grid.dim):
        lo, hi = grid.bounds(a)
        if center[a] - radius < lo or center[a] + radius > hi:
            raise FieldError(
                f"ball of radius {radius:.4g} at {center} exceeds the grid box"
            )
    cov = _mass_matched_coverage(grid, center, radius, volume)
    return DensityField(grid, density * cov)


def _mass_matched_coverage(grid, center, radius, volume):
    vol = grid.cell_volume

    def shortfall(r):
        return ball_coverage(grid, center, r).sum() * vol - volume

    lo, hi = max(radius - grid.h, grid.h * 1e-6), radius + grid.h
    flo, fhi = shortfall(lo), shortfall(hi)
    r = radius
    if flo < 0.0 < fhi:
        for _ in range(60):
            r = 0.5 * (lo + hi)
            if shortfall(r) > 0:
                hi = r
            else:
                lo = r
        r = 0.5 * (lo + hi)
    cov = ball_coverage(grid, center, r).copy()
    # spread the remaining mass defect over the cells straddling the sphere;
    # iterate because the uniform correction may saturate some of them
    dist = np.sqrt(grid.distance_sq(center))
    half_diag = 0.5 * grid.h * np.sqrt(grid.dim)
    fringe = np.abs(dist - r) < half_diag
    if not fringe.any():
        fringe = (cov > 0.0) & (cov < 1.0)
    for _ in range(4):
        residual = volume - cov.sum() * vol
        room = fringe & ((cov < 1.0) if residual > 0 else (cov > 0.0))
        n = int(room.sum())
        if n == 0 or abs(residual) < 1e-15 * max(volume, 1.0):
            break
        delta = residual / (n * vol)
        cov[room] = np.clip(cov[room] + delta, 0.0, 1.0)
    return cov


def write_field(f, path):
    """Write a ``.df`` file: one JSON header line + little-endian float64."""
    header = {
        "dim": f.grid.dim,
        "cells": list(f.grid.cells),
        "h": f.grid.h,
        "origin": list(f.grid.origin),
    }
    payload = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".df.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(json.dumps(header).encode() + b"\n")
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_field(path):
    with open(path, "rb") as fh:
        line = fh.readline()
        raw = fh.read()
    try:
        header = json.loads(line.decode())
        dim = int(header["dim"])
        cells = tuple(int(n) for n in header["cells"])
        h = float(header["h"])
        origin = tuple(float(x) for x in header["origin"])
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise FieldError(f"malformed field header in {path}: {exc}") from exc
    grid = Grid(dim, cells, h, origin)
    expected = grid.n_cells * 8
    if len(raw) != expected:
        raise FieldError(
            f"payload length {len(raw)} != {expected} bytes for cells {cells}"
        )
    vals = np.frombuffer(raw, dtype="<f8").reshape(cells)
    return DensityField(grid, vals)
