"""Conservative self-adjusting multirate integration of 1D conservation laws.

Fluxes, not cells, are refined in time: an interface flux accepted at a
coarse level is frozen and reused by the finer sub-steps of its neighbours,
so both sides of every interface see the same time-integrated flux.
"""
from .baseline import ComponentBaseline, SingleRate, multirate_component_baseline
from .boundary import BoundaryCondition, apply_bc, dirichlet, extrapolate, periodic
from .engine import (
    EngineFailure,
    FluxLedger,
    MultirateEngine,
    ToleranceConfig,
    conservation_audit,
    derive_active_cells,
    estimate_flux_error,
    global_integrate,
    propose_substep,
    select_rejected,
    snap_to_fraction,
    widen_rejections,
)
from .fluxes import Discretization, FluxFunction, rusanov_flux, semidiscrete_rhs, upwind_flux
from .grid import Grid1D, State, build_grid, cell_average_init, total_mass
from .harness import (
    ConfigError,
    RunConfig,
    RunReport,
    compare_modes,
    consistency_experiment,
    execute,
    l1_error,
    observed_order,
    preset_config,
    reference_solve,
    run_experiment,
)
from .integrators import (
    IntegratorConfig,
    NewtonError,
    amplification_factor,
    hermite_extrapolate,
    newton_solve,
    theta_step,
    trbdf2_step,
)
from .problems import (
    PROBLEMS,
    ProblemSpec,
    buckley_leverett,
    burgers,
    linear_advection,
    rotating_shallow_water,
    saint_venant_dam_break,
)

__all__ = [
    "BoundaryCondition",
    "ComponentBaseline",
    "ConfigError",
    "Discretization",
    "EngineFailure",
    "FluxFunction",
    "FluxLedger",
    "Grid1D",
    "IntegratorConfig",
    "MultirateEngine",
    "NewtonError",
    "PROBLEMS",
    "ProblemSpec",
    "RunConfig",
    "RunReport",
    "SingleRate",
    "State",
    "ToleranceConfig",
    "amplification_factor",
    "apply_bc",
    "buckley_leverett",
    "build_grid",
    "burgers",
    "cell_average_init",
    "compare_modes",
    "conservation_audit",
    "consistency_experiment",
    "derive_active_cells",
    "dirichlet",
    "estimate_flux_error",
    "execute",
    "extrapolate",
    "global_integrate",
    "hermite_extrapolate",
    "l1_error",
    "linear_advection",
    "multirate_component_baseline",
    "newton_solve",
    "observed_order",
    "periodic",
    "preset_config",
    "propose_substep",
    "reference_solve",
    "rotating_shallow_water",
    "run_experiment",
    "rusanov_flux",
    "saint_venant_dam_break",
    "select_rejected",
    "semidiscrete_rhs",
    "snap_to_fraction",
    "theta_step",
    "total_mass",
    "trbdf2_step",
    "upwind_flux",
    "widen_rejections",
]
