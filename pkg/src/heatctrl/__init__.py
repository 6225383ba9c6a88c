"""Numerical toolkit for internally controlled one-dimensional heat equations.

Computes minimal-norm null controls, minimal-time bang-bang controls,
attainable-subspace norms, and observability constants through the dual
variational characterizations, and checks the identities that tie them
together at desk scale.
"""

from .attainable import (
    AttainableElement,
    AttainableNormResult,
    RoundtripReport,
    ShiftDensityReport,
    XiElement,
    attainable_norm,
    gauge_transform,
    h_q_map,
    roundtrip,
    shift_density_check,
    u_xi,
)
from .config import (
    ConfigFileError,
    ExperimentConfig,
    config_hash,
    load_config,
    space_function,
    space_time_function,
    time_function,
)
from .dual import (
    ConfigurationError,
    DualProblem,
    MinimizerResult,
    SolverConfig,
    conjugate_exponent,
    control_from_minimizer,
    evaluate_J,
    grad_J,
    gramian_oracle,
    minimize_J,
)
from .minnorm import (
    NhatEstimate,
    NormCurve,
    NormValueResult,
    blowup_probe,
    dual_sup_check,
    nhat_estimate,
    norm_curve,
    norm_value,
    null_residual,
)
from .observability import (
    AscentConfig,
    BetaBoundFit,
    BetaEstimate,
    ObservabilityError,
    beta_bound_fit,
    beta_curve,
    beta_estimate,
    single_mode_ratio,
)
from .pde import (
    ControlRegion,
    ControlSignal,
    Potential,
    SpatialGrid,
    TimeMesh,
    Trajectory,
    bochner_norm,
    duality_residual,
    lowest_mode,
    solve_adjoint,
    solve_forward,
)
from .timeopt import (
    BangBangReport,
    BracketError,
    NoOptimalControl,
    TimeOptimalQuery,
    TimeOptimalResult,
    bangbang_check,
    time_optimal_solve,
    zero_extended,
)

__version__ = "0.1.0"

__all__ = [
    "SpatialGrid",
    "ControlRegion",
    "TimeMesh",
    "Potential",
    "Trajectory",
    "ControlSignal",
    "solve_forward",
    "solve_adjoint",
    "duality_residual",
    "bochner_norm",
    "lowest_mode",
    "ConfigurationError",
    "DualProblem",
    "SolverConfig",
    "MinimizerResult",
    "evaluate_J",
    "grad_J",
    "minimize_J",
    "control_from_minimizer",
    "gramian_oracle",
    "conjugate_exponent",
    "NormValueResult",
    "NormCurve",
    "NhatEstimate",
    "norm_value",
    "dual_sup_check",
    "norm_curve",
    "blowup_probe",
    "nhat_estimate",
    "null_residual",
    "TimeOptimalQuery",
    "TimeOptimalResult",
    "BangBangReport",
    "BracketError",
    "NoOptimalControl",
    "time_optimal_solve",
    "zero_extended",
    "bangbang_check",
    "XiElement",
    "AttainableElement",
    "AttainableNormResult",
    "RoundtripReport",
    "ShiftDensityReport",
    "u_xi",
    "h_q_map",
    "attainable_norm",
    "roundtrip",
    "gauge_transform",
    "shift_density_check",
    "ObservabilityError",
    "AscentConfig",
    "BetaEstimate",
    "BetaBoundFit",
    "beta_estimate",
    "beta_curve",
    "beta_bound_fit",
    "single_mode_ratio",
    "ConfigFileError",
    "ExperimentConfig",
    "load_config",
    "config_hash",
    "space_function",
    "time_function",
    "space_time_function",
    "__version__",
]
