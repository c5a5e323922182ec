"""Finite-difference simulator for a diffusive predator-prey system with
prey-taxis and predator-taxis, plus checks of its a priori estimates."""

from .analysis import (
    absorption_coefficients,
    BoundReport,
    GrowthReport,
    bound_monitor,
    convergence_order,
    dominant_mode_direction,
    energy_distance,
    gronwall_twin_test,
    supersolution_residual_u,
    supersolution_residual_v,
)
from .config import RunSpec, format_config, parse_config
from .grid import Grid, c2_norm_proxy, div_flux_upwind, gradient_neumann, holder_seminorm_proxy, laplacian_neumann
from .imex import State, StepControl, integrate_imex, run_imex, step_imex
from .model import (
    DerivedConstants,
    InitialDataNorms,
    ModelParams,
    check_taxis_admissible,
    coexistence_equilibrium,
    derive_constants,
    reaction_u,
    reaction_v,
)
from .picard import PicardControl, integrate_picard, picard_slab, run_picard, scale_from_hat, scale_to_hat
from .trace import NormTrace

__all__ = [
    "absorption_coefficients",
    "BoundReport",
    "GrowthReport",
    "bound_monitor",
    "convergence_order",
    "dominant_mode_direction",
    "energy_distance",
    "gronwall_twin_test",
    "supersolution_residual_u",
    "supersolution_residual_v",
    "RunSpec",
    "format_config",
    "parse_config",
    "Grid",
    "c2_norm_proxy",
    "div_flux_upwind",
    "gradient_neumann",
    "holder_seminorm_proxy",
    "laplacian_neumann",
    "State",
    "StepControl",
    "integrate_imex",
    "run_imex",
    "step_imex",
    "DerivedConstants",
    "InitialDataNorms",
    "ModelParams",
    "check_taxis_admissible",
    "coexistence_equilibrium",
    "derive_constants",
    "reaction_u",
    "reaction_v",
    "PicardControl",
    "integrate_picard",
    "picard_slab",
    "run_picard",
    "scale_from_hat",
    "scale_to_hat",
    "NormTrace",
]

__version__ = "0.1.0"
