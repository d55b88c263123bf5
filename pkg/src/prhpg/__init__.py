"""Polytopic receding-horizon policy-gradient synthesis for qLPV systems."""
from .errors import (
    ConfigError,
    ConstructionError,
    DegenerateBasisError,
    DegenerateStageError,
    DomainError,
    NumericalConsistencyError,
    PRHPGError,
    UnstabilizableError,
    UnstableError,
)
from .model import (
    ParameterDomain,
    PolytopicModel,
    WeightingBasis,
    closed_loop,
    constant_basis,
    evaluate_system,
    evaluate_weights,
    gram_matrix,
    hat_basis,
    load_model,
    save_model,
    tp_transform,
)
from .quadrature import QuadratureRule, gauss_legendre, integrate, rule_for_model
from .stage import CostSpec, CostToGoField, stage_cost, stage_gradient, stage_hessian, stage_solve_direct, stage_solve_gd
from .sweep import GD, Direct, TerminalCost, horizon_sweep, rhpg_synthesize
from .evaluation import EvalReport, evaluate_controller, dare, dlyap, spectral_radius

__version__ = "0.1.0"
