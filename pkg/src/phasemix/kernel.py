"""Interaction kernels, free-space potentials and the bilinear functional.

The potential V = K * f is computed as a free-space (zero padded) discrete
convolution V[k] = h^N sum_j W[k-j] f[j], where W samples the kernel at
cell-offset distances and W[0] is the exact cell average of K. A direct
summation path is kept as an independent cross-check for small grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .field import Grid, DensityField, FieldError

COULOMB_CONSTANTS = ("fundamental", "printed")


class KernelError(ValueError):
    """Raised on invalid kernel specifications or evaluations."""


@dataclass(frozen=True)
class KernelSpec:
    """Radially symmetric non-increasing interaction kernel.

    kind is one of coulomb, top_hat, tent, gaussian, tabulated_radial.
    The coulomb kind carries the ambient dimension and a choice of
    normalization constant: "fundamental" enforces -ΔK = δ0 (so -ΔV = f),
    "printed" keeps 1/((N-2) ω_N) for N >= 3. They differ by a factor N.
    """

    kind: str
    dim: int = 0
    rho: float = 0.0
    sigma: float = 0.0
    table: tuple = ()
    coulomb_constant: str = "fundamental"

    @classmethod
    def coulomb(cls, dim, constant="fundamental"):
        if dim not in (1, 2, 3):
            raise KernelError(f"coulomb kernel needs dim in 1..3, got {dim}")
        if constant not in COULOMB_CONSTANTS:
            raise KernelError(f"unknown coulomb constant {constant!r}")
        return cls("coulomb", dim=dim, coulomb_constant=constant)

    @classmethod
    def top_hat(cls, rho):
        if rho <= 0:
            raise KernelError("top_hat radius must be positive")
        return cls("top_hat", rho=float(rho))

    @classmethod
    def tent(cls, rho):
        if rho <= 0:
            raise KernelError("tent radius must be positive")
        return cls("tent", rho=float(rho))

    @classmethod
    def gaussian(cls, sigma):
        if sigma <= 0:
            raise KernelError("gaussian width must be positive")
        return cls("gaussian", sigma=float(sigma))

    @classmethod
    def tabulated(cls, radii, values):
        radii = tuple(float(r) for r in radii)
        values = tuple(float(v) for v in values)
        if len(radii) != len(values) or len(radii) < 2:
            raise KernelError("tabulated kernel needs >= 2 (radius, value) samples")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise KernelError("tabulated radii must be strictly increasing")
        if any(b > a + 1e-12 for a, b in zip(values, values[1:])):
            raise KernelError("tabulated kernel must be non-increasing in radius")
        return cls("tabulated_radial", table=tuple(zip(radii, values)))

    @property
    def singular(self):
        return self.kind == "coulomb" and self.dim >= 2

    @property
    def positive_definite(self):
        """Kernels for which J(φ, φ) >= 0 holds for all φ."""
        return self.kind == "gaussian" or (self.kind == "coulomb" and self.dim == 3)


def kernel_value(spec, r):
    """Evaluate K at radius r (scalar or array). Singular kernels reject r=0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise KernelError("radius must be nonnegative")
    if spec.kind == "coulomb":
        if spec.dim >= 2 and np.any(r == 0.0):
            raise KernelError(
                "coulomb kernel is singular at r=0; use central_cell_weight"
            )
        if spec.dim == 1:
            out = -0.5 * r
        elif spec.dim == 2:
            out = -np.log(r) / (2.0 * np.pi)
        else:
            c = _coulomb3_constant(spec)
            out = c / r
    elif spec.kind == "top_hat":
        out = (r <= spec.rho).astype(float)
    elif spec.kind == "tent":
        out = np.maximum(spec.rho - r, 0.0)
    elif spec.kind == "gaussian":
        out = np.exp(-0.5 * (r / spec.sigma) ** 2)
    elif spec.kind == "tabulated_radial":
        radii = np.array([p[0] for p in spec.table])
        vals = np.array([p[1] for p in spec.table])
        out = np.interp(r, radii, vals)
    else:
        raise KernelError(f"unknown kernel kind {spec.kind!r}")
    return out if out.shape else float(out)


def _coulomb3_constant(spec):
    # fundamental: 1/(4π) so that -ΔK = δ0; printed: 1/((N-2) ω_N) = 3/(4π).
    return 1.0 / (4.0 * np.pi) if spec.coulomb_constant == "fundamental" else 3.0 / (4.0 * np.pi)


def central_cell_weight(spec, grid):
    """Cell average (1/h^N) ∫_cell K of the kernel over the cell at 0."""
    h = grid.h
    a = 0.5 * h
    if spec.kind == "coulomb":
        if spec.dim == 1:
            return -h / 8.0
        if spec.dim == 2:
            # 8 * ∫_0^{π/4} ∫_0^{a/cosθ} log(r) r dr dθ over the square side h
            def inner(theta):
                R = a / np.cos(theta)
                return 0.5 * R * R * (np.log(R) - 0.5)

            val, _ = integrate.quad(inner, 0.0, np.pi / 4.0, epsabs=1e-14)
            return -(8.0 * val) / (2.0 * np.pi * h * h)
        # ∫_cube 1/|x| = 3a ∫∫_{[-a,a]^2} du dv / sqrt(u²+v²+a²)
        base, _ = integrate.dblquad(
            lambda u, v: 1.0 / np.sqrt(u * u + v * v + a * a),
            -a, a, -a, a, epsabs=1e-12,
        )
        return _coulomb3_constant(spec) * 3.0 * a * base / h ** 3
    if spec.kind == "top_hat":
        if spec.rho >= a * np.sqrt(grid.dim):
            return 1.0
        return _smooth_cell_average(spec, grid)
    return _smooth_cell_average(spec, grid)


_GL_ORDER = 12


def _smooth_cell_average(spec, grid):
    nodes, weights = np.polynomial.legendre.leggauss(_GL_ORDER)
    nodes = 0.5 * grid.h * nodes
    weights = 0.5 * weights
    grids = np.meshgrid(*([nodes] * grid.dim), indexing="ij")
    w = np.ones_like(grids[0])
    for wg in np.meshgrid(*([weights] * grid.dim), indexing="ij"):
        w = w * wg
    r = np.sqrt(sum(g * g for g in grids))
    r = np.maximum(r, 1e-300)
    return float((kernel_value(spec, r) * w).sum())


_weight_cache = {}


def _grid_key(grid):
    return (grid.dim, grid.cells, round(grid.h, 15))


def offset_weights(spec, grid):
    """Kernel samples W over all cell offsets, centered, with exact W[0]."""
    key = (spec, _grid_key(grid))
    cached = _weight_cache.get(key)
    if cached is not None:
        return cached
    axes = [np.arange(-(n - 1), n) for n in grid.cells]
    mesh = np.meshgrid(*axes, indexing="ij")
    r = grid.h * np.sqrt(sum(m.astype(float) ** 2 for m in mesh))
    center = tuple(n - 1 for n in grid.cells)
    if spec.singular:
        r[center] = 1.0
    W = np.asarray(kernel_value(spec, np.maximum(r, 1e-300)), dtype=float)
    W[center] = central_cell_weight(spec, grid)
    fshape = tuple(2 * n - 1 for n in grid.cells)
    Wf = np.fft.rfftn(W, s=fshape, axes=tuple(range(grid.dim)))
    _weight_cache[key] = (W, Wf)
    return W, Wf


@dataclass(frozen=True)
class PotentialField:
    """Potential V = K * f on the source grid."""

    grid: Grid
    values: np.ndarray
    source_mass: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise KernelError("potential has non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def potential_values(values, grid, spec, method="fft"):
    """Free-space convolution of raw cell values with the kernel weights."""
    if method == "fft":
        _, Wf = offset_weights(spec, grid)
        fshape = tuple(2 * n - 1 for n in grid.cells)
        axes = tuple(range(grid.dim))
        Ff = np.fft.rfftn(values, s=fshape, axes=axes)
        full = np.fft.irfftn(Ff * Wf, s=fshape, axes=axes)
        sl = tuple(slice(n - 1, 2 * n - 1) for n in grid.cells)
        return full[sl] * grid.cell_volume
    if method == "direct":
        W, _ = offset_weights(spec, grid)
        out = np.zeros(grid.cells)
        idx = np.argwhere(values != 0.0)
        for j in idx:
            sl = tuple(
                slice(n - 1 - j[a], 2 * n - 1 - j[a])
                for a, n in enumerate(grid.cells)
            )
            out += values[tuple(j)] * W[sl]
        return out * grid.cell_volume
    raise KernelError(f"unknown convolution method {method!r}")


def potential(f, spec, method="fft"):
    """Potential field V = K * f (non-periodic)."""
    vals = potential_values(f.values, f.grid, spec, method=method)
    return PotentialField(f.grid, vals, f.mass)


def interaction(f, g, spec, method="fft"):
    """Bilinear interaction J_K(f, g) = ∫∫ f(x) g(y) K(x-y)."""
    if not f.grid.compatible(g.grid):
        raise FieldError("interaction requires a shared grid")
    Vg = potential_values(g.values, g.grid, spec, method=method)
    return float((f.values * Vg).sum() * f.grid.cell_volume)
