"""Simulation and diagnostics for the 1D porous medium equation with fractional
pressure, with optional absorption or convection."""

from .barenblatt import (
    BarenblattProfile,
    euler_lagrange_residual,
    evaluate,
    mass_from_radius,
    radius_from_mass,
    rescaled_profile,
    sample_on_grid,
)
from .entropy import (
    DiagnosticsRecord,
    check_entropy_dissipation,
    dissipation,
    moment,
    regularized_dissipation,
    regularized_entropy,
    relative_entropy,
    wasserstein2,
)
from .frac_ops import (
    frac_laplacian,
    homog_sobolev_norm,
    kernel_table,
    neg_sobolev_seminorm_sq,
    riesz_potential,
    riesz_potential_direct,
    velocity_field,
)
from .grid import Field, Grid1D
from .harness import RateFit, fit_decay_rate, run_experiment, theoretical_rate
from .integrated import IntegratedState, differentiate_cdf, integrate_density, step_integrated
from .solver import (
    SimState,
    SolverConfig,
    cfl_dt,
    inverse_similarity_transform,
    lp_decay_check,
    run,
    similarity_transform,
    step,
)

__version__ = "0.1.0"
