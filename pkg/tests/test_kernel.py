import numpy as np
import pytest

from phasemix.field import DensityField, FieldError, Grid
from phasemix.kernel import (
    KernelError,
    KernelSpec,
    central_cell_weight,
    interaction,
    kernel_value,
    potential,
    potential_values,
)


def test_coulomb_1d_values():
    spec = KernelSpec.coulomb(1)
    assert kernel_value(spec, 2.0) == pytest.approx(-1.0)
    assert kernel_value(spec, 0.0) == 0.0


def test_coulomb_2d_3d_values_and_constants():
    log_spec = KernelSpec.coulomb(2)
    assert kernel_value(log_spec, 1.0) == pytest.approx(0.0)
    assert kernel_value(log_spec, np.e) == pytest.approx(-1 / (2 * np.pi))
    fund = KernelSpec.coulomb(3)
    printed = KernelSpec.coulomb(3, constant="printed")
    assert kernel_value(fund, 2.0) == pytest.approx(1 / (8 * np.pi))
    assert kernel_value(printed, 2.0) == pytest.approx(3 * kernel_value(fund, 2.0))


def test_singular_kernels_reject_zero_radius():
    for dim in (2, 3):
        with pytest.raises(KernelError):
            kernel_value(KernelSpec.coulomb(dim), 0.0)
    # 1D kernel is finite at the origin
    kernel_value(KernelSpec.coulomb(1), 0.0)


def test_kernel_spec_validation():
    with pytest.raises(KernelError):
        KernelSpec.coulomb(5)
    with pytest.raises(KernelError):
        KernelSpec.top_hat(-1.0)
    with pytest.raises(KernelError):
        KernelSpec.tabulated([0.0, 1.0], [1.0, 2.0])  # increasing values
    with pytest.raises(KernelError):
        KernelSpec.tabulated([1.0, 0.5], [1.0, 0.5])  # radii not increasing
    spec = KernelSpec.tabulated([0.0, 1.0, 2.0], [1.0, 0.5, 0.0])
    assert kernel_value(spec, 0.5) == pytest.approx(0.75)


def test_positive_definite_flags():
    assert KernelSpec.gaussian(1.0).positive_definite
    assert KernelSpec.coulomb(3).positive_definite
    assert not KernelSpec.coulomb(2).positive_definite
    assert not KernelSpec.top_hat(1.0).positive_definite


def test_central_cell_weight_1d_exact():
    g = Grid.centered(1, 8, 0.25)
    assert central_cell_weight(KernelSpec.coulomb(1), g) == pytest.approx(
        -0.25 / 8.0
    )


def test_central_cell_weight_scaling_laws():
    # 2D: cell average of -log|x|/2pi shifts by -log(h)/2pi under scaling
    g1 = Grid.centered(2, 4, 1.0)
    gh = Grid.centered(2, 4, 0.125)
    spec = KernelSpec.coulomb(2)
    w1 = central_cell_weight(spec, g1)
    wh = central_cell_weight(spec, gh)
    assert wh == pytest.approx(w1 - np.log(0.125) / (2 * np.pi), rel=1e-10)
    # 3D: cell average of 1/(4pi |x|) scales like 1/h
    g1 = Grid.centered(3, 4, 1.0)
    gh = Grid.centered(3, 4, 0.25)
    spec = KernelSpec.coulomb(3)
    assert central_cell_weight(spec, gh) == pytest.approx(
        central_cell_weight(spec, g1) / 0.25, rel=1e-10
    )


def test_central_cell_weight_monte_carlo():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.5, 0.5, size=(400_000, 2))
    r = np.hypot(pts[:, 0], pts[:, 1])
    mc = (-np.log(r) / (2 * np.pi)).mean()
    g = Grid.centered(2, 4, 1.0)
    assert central_cell_weight(KernelSpec.coulomb(2), g) == pytest.approx(
        mc, abs=2e-3
    )
    pts = rng.uniform(-0.5, 0.5, size=(400_000, 3))
    r = np.linalg.norm(pts, axis=1)
    mc = (1.0 / (4 * np.pi * r)).mean()
    g = Grid.centered(3, 4, 1.0)
    assert central_cell_weight(KernelSpec.coulomb(3), g) == pytest.approx(
        mc, rel=5e-3
    )


def test_central_cell_weight_top_hat_covers_cell():
    g = Grid.centered(2, 4, 0.5)
    assert central_cell_weight(KernelSpec.top_hat(2.0), g) == 1.0
    small = central_cell_weight(KernelSpec.top_hat(0.1), g)
    assert 0.0 < small < 1.0


@pytest.mark.parametrize(
    "dim,n,h",
    [(1, 32, 0.125), (2, 16, 0.25), (3, 8, 0.4)],
)
def test_fft_matches_direct_summation(dim, n, h):
    g = Grid.centered(dim, n, h)
    rng = np.random.default_rng(1)
    v = rng.uniform(0, 0.7, g.cells)
    kernels = [
        KernelSpec.coulomb(dim),
        KernelSpec.gaussian(0.6),
        KernelSpec.tent(0.9),
        KernelSpec.top_hat(0.8),
    ]
    for spec in kernels:
        a = potential_values(v, g, spec, method="fft")
        b = potential_values(v, g, spec, method="direct")
        assert np.abs(a - b).max() < 1e-10


def test_interaction_symmetric_and_grid_checked():
    g = Grid.centered(2, 16, 0.25)
    rng = np.random.default_rng(2)
    f = DensityField(g, rng.uniform(0, 0.5, g.cells))
    h = DensityField(g, rng.uniform(0, 0.5, g.cells))
    spec = KernelSpec.gaussian(0.5)
    assert interaction(f, h, spec) == pytest.approx(interaction(h, f, spec), rel=1e-12)
    other = Grid.centered(2, 8, 0.25)
    f2 = DensityField(other, np.zeros(other.cells))
    with pytest.raises(FieldError):
        interaction(f, f2, spec)


def test_unit_interval_self_interaction():
    # J(chi_I, chi_I) for the 1D coulomb kernel and a unit interval is -1/6
    g = Grid.centered(1, 256, 1 / 64)
    x = g.axis_coords(0)
    h = g.h
    left = np.clip((x + h / 2) + 0.5, 0, h)
    right = np.clip(0.5 - (x - h / 2), 0, h)
    f = DensityField(g, np.minimum(left, right).clip(0, h) / h)
    assert f.mass == pytest.approx(1.0)
    assert interaction(f, f, KernelSpec.coulomb(1)) == pytest.approx(
        -1 / 6, abs=2e-4
    )


def test_potential_is_smoother_near_sources():
    g = Grid.centered(2, 32, 0.125)
    v = np.zeros(g.cells)
    v[16, 16] = 1.0
    f = DensityField(g, v)
    V = potential(f, KernelSpec.coulomb(2))
    # single positive source: potential peaks at the source cell
    assert np.unravel_index(np.argmax(V.values), g.cells) == (16, 16)
