"""Malliavin calculus for Lévy processes with finite-activity jumps.

Path simulation, stochastic integrals against W and the compensated jump
measure, Doléans exponentials, chaos expansions, Malliavin derivatives and
Clark-Ocone representations, including the running maximum.
"""

from .errors import (
    ConfigError,
    ExtrapolationBeyondTable,
    FourierTailTooHeavy,
    InnerBudgetZero,
    LevyMalliavinError,
    MassAtZero,
    ModelError,
    NegativeIntensity,
    OrderTooLarge,
    SigmaNotPositive,
    TNotOnGrid,
    UnsupportedVariant,
)
from .model import (
    GaussianLaw,
    JumpMeasure,
    LevyModel,
    TwoPointLaw,
    UniformLaw,
    characteristic_exponent,
    gamma_map,
    validate_model,
    variance_rate,
)
from .simulate import (
    PathBatch,
    PathState,
    SamplePath,
    SeedSpec,
    TimeGrid,
    iter_batches,
    resimulate_batch,
    resimulate_from,
    simulate_batch,
    simulate_path,
)
from .integrate import Integrand1, Integrand2, compensator, integral_ntilde, ito_integral_w, jump_sum, nu_integral
from .doleans import ExponentParams, doleans_euler, doleans_exponential, verify_z_martingale
from .chaos import (
    MultiIndex,
    SimplexFunction,
    chaos_expand_Z,
    first_order_coefficients,
    iterated_integral,
    orthogonality_matrix,
    simplex_inner_product,
    tensor_product,
)
from .malliavin import (
    DoleansTerminal,
    IteratedIntegral,
    RunningMax,
    SmoothKPoint,
    d1_iterated,
    d1_smooth,
    d2_add_mass,
    d2_iterated,
    derivative_field,
    terminal_square,
    terminal_value,
)
from .clark_ocone import closed_form_representation, conditional_derivative, nested_integrands, reconstruct, residual_study
from .max_repr import TailTable, build_tail_table, max_integrands, running_max, shiryaev_yor, verify_max_representation

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ExtrapolationBeyondTable",
    "FourierTailTooHeavy",
    "InnerBudgetZero",
    "LevyMalliavinError",
    "MassAtZero",
    "ModelError",
    "NegativeIntensity",
    "OrderTooLarge",
    "SigmaNotPositive",
    "TNotOnGrid",
    "UnsupportedVariant",
    "GaussianLaw",
    "JumpMeasure",
    "LevyModel",
    "TwoPointLaw",
    "UniformLaw",
    "characteristic_exponent",
    "gamma_map",
    "validate_model",
    "variance_rate",
    "PathBatch",
    "PathState",
    "SamplePath",
    "SeedSpec",
    "TimeGrid",
    "iter_batches",
    "resimulate_batch",
    "resimulate_from",
    "simulate_batch",
    "simulate_path",
    "Integrand1",
    "Integrand2",
    "compensator",
    "integral_ntilde",
    "ito_integral_w",
    "jump_sum",
    "nu_integral",
    "ExponentParams",
    "doleans_euler",
    "doleans_exponential",
    "verify_z_martingale",
    "MultiIndex",
    "SimplexFunction",
    "chaos_expand_Z",
    "first_order_coefficients",
    "iterated_integral",
    "orthogonality_matrix",
    "simplex_inner_product",
    "tensor_product",
    "DoleansTerminal",
    "IteratedIntegral",
    "RunningMax",
    "SmoothKPoint",
    "d1_iterated",
    "d1_smooth",
    "d2_add_mass",
    "d2_iterated",
    "derivative_field",
    "terminal_square",
    "terminal_value",
    "closed_form_representation",
    "conditional_derivative",
    "nested_integrands",
    "reconstruct",
    "residual_study",
    "TailTable",
    "build_tail_table",
    "max_integrands",
    "running_max",
    "shiryaev_yor",
    "verify_max_representation",
]
