"""Distributed consensus optimization with negotiable agreement.

Users minimize private regularized losses that are coupled through a
shared consensus variable; agreement can be exact, relaxed to a norm
ball, or restricted to neighbor groups.  The coupling prices are either
fixed or updated online by projection, hyperplane, or regularized
fixed-point schemes, and every run is measured against a centralized
reference solve.
"""
from __future__ import annotations

from .centralized import NotConvergedError, compute_delta, solve_centralized
from .config import InnerSolverConfig, RunConfig, init_state
from .constraints import (
    ClassicalConsensus,
    GroupConsensus,
    LinearConstraintMatrices,
    SoftNormConsensus,
    build_linear_matrices,
    eval_equality,
    eval_inequality,
    feasibility_residual,
)
from .diagnostics import (
    InsufficientSamplesError,
    KKTResidual,
    UpsilonMatrix,
    build_upsilon,
    estimate_cocoercivity,
    estimate_strong_monotonicity,
    is_p_matrix,
    kkt_residual,
)
from .experiments import (
    ConfigError,
    DataSettings,
    ExperimentSpec,
    SweepResult,
    SweepSettings,
    diagnose,
    emit_csv,
    emit_plot_data,
    execute_run,
    parse_config,
    run_sweep,
)
from .local_solver import InnerDivergenceError, solve_local, update_z
from .losses import LossKind, curvature_bounds, loss_gradient, loss_value
from .model import (
    RunTrace,
    SystemState,
    TraceRecord,
    UserDataset,
    generate_synthetic,
    state_distance,
)
from .multipliers import (
    FixedMultipliers,
    HyperplaneScheme,
    ProjectionScheme,
    StepSearchFailedError,
    TikhonovScheme,
    tikhonov_step_valid,
)
from .orchestrator import (
    Message,
    OrchestratedRun,
    has_converged,
    run_algorithm1,
    run_algorithm2,
)
from .protection import L2Protection, NoProtection, robust_objective

__version__ = "0.1.0"

__all__ = [
    "ClassicalConsensus",
    "ConfigError",
    "DataSettings",
    "ExperimentSpec",
    "FixedMultipliers",
    "GroupConsensus",
    "HyperplaneScheme",
    "InnerDivergenceError",
    "InnerSolverConfig",
    "InsufficientSamplesError",
    "KKTResidual",
    "L2Protection",
    "LinearConstraintMatrices",
    "LossKind",
    "Message",
    "NoProtection",
    "NotConvergedError",
    "OrchestratedRun",
    "ProjectionScheme",
    "RunConfig",
    "RunTrace",
    "SoftNormConsensus",
    "StepSearchFailedError",
    "SweepResult",
    "SweepSettings",
    "SystemState",
    "TikhonovScheme",
    "TraceRecord",
    "UpsilonMatrix",
    "UserDataset",
    "build_linear_matrices",
    "build_upsilon",
    "compute_delta",
    "curvature_bounds",
    "diagnose",
    "emit_csv",
    "emit_plot_data",
    "estimate_cocoercivity",
    "estimate_strong_monotonicity",
    "eval_equality",
    "eval_inequality",
    "execute_run",
    "feasibility_residual",
    "generate_synthetic",
    "has_converged",
    "init_state",
    "is_p_matrix",
    "kkt_residual",
    "loss_gradient",
    "loss_value",
    "parse_config",
    "robust_objective",
    "run_algorithm1",
    "run_algorithm2",
    "run_sweep",
    "solve_centralized",
    "solve_local",
    "state_distance",
    "tikhonov_step_valid",
    "update_z",
    "__version__",
]
