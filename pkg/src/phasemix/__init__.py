"""Two-species nonlocal interaction energies on grids.

Densities with values in [0, 1], fixed masses and pointwise sum at most 1
interact through a radially symmetric non-increasing kernel; the package
evaluates the quadratic energy, rasterizes the known closed-form
minimizers, checks rearrangement inequalities, and minimizes the energy by
projected gradient descent.
"""

from .field import (
    DensityField,
    FieldError,
    Grid,
    PhasePair,
    PhaseRegions,
    make_field,
    rasterize_ball,
    read_field,
    region_decomposition,
    write_field,
)
from .kernel import (
    KernelError,
    KernelSpec,
    PotentialField,
    interaction,
    potential,
)
from .energy import (
    EnergyBreakdown,
    EnergyError,
    bathtub_fill,
    energy,
    first_variation,
    second_variation_form,
    stationarity_report,
)
from .analytic import (
    AnalyticError,
    AnalyticMinimizer,
    Regime,
    analytic_minimizer,
    ball_radius,
    classify_regime,
    degenerate_family_sample,
    mixing_fractions,
)
from .rearrange import (
    check_rearr0,
    grid_tolerance,
    improved_riesz_gap,
    riesz_gap,
    superlevel_transport,
    symmetric_decreasing,
)
from .solver import (
    InfeasibleError,
    SolverConfig,
    SolverError,
    SolverResult,
    center,
    compare,
    minimize,
    minimize_multistart,
    project_admissible,
    sweep,
    tangent_ball_study,
)

__all__ = [
    "AnalyticError",
    "AnalyticMinimizer",
    "DensityField",
    "EnergyBreakdown",
    "EnergyError",
    "FieldError",
    "Grid",
    "InfeasibleError",
    "KernelError",
    "KernelSpec",
    "PhasePair",
    "PhaseRegions",
    "PotentialField",
    "Regime",
    "SolverConfig",
    "SolverError",
    "SolverResult",
    "analytic_minimizer",
    "ball_radius",
    "bathtub_fill",
    "center",
    "check_rearr0",
    "classify_regime",
    "compare",
    "degenerate_family_sample",
    "energy",
    "first_variation",
    "grid_tolerance",
    "improved_riesz_gap",
    "interaction",
    "make_field",
    "minimize",
    "minimize_multistart",
    "mixing_fractions",
    "potential",
    "project_admissible",
    "rasterize_ball",
    "read_field",
    "region_decomposition",
    "riesz_gap",
    "second_variation_form",
    "stationarity_report",
    "superlevel_transport",
    "sweep",
    "symmetric_decreasing",
    "tangent_ball_study",
    "write_field",
]

__version__ = "0.1.0"
