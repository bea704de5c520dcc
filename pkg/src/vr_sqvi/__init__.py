"""Variance-reduced projection methods for strongly monotone stochastic QVIs."""

from .blood import BloodMarket, VolumeKind, build_example1, build_example2
from .config import Mode, Sampling, SolverConfig, StrongMonotonicityData
from .errors import (
    BoundOrderError,
    BoundViolationError,
    ConfigError,
    DimensionTooLargeError,
    DomainError,
    InfeasibleConditionError,
    InfeasibleSetError,
    ProjectionError,
    ScheduleOverflowError,
    SqviError,
)
from .primal_dual import AcceleratedPrimalDual, InnerSolveResult, project_inexact
from .problem import QviProblem, estimate_constants
from .projection import feasibility_probe, project_box, project_exact
from .sets import MovingSet, ParamConstraint, affine_constraint
from .solver import IterateRecord, RunReport, natural_residual, solve
from .stochastic import StochasticOracle, batch_average, noise_diagnostic
from .synthetic import make_synthetic
from .theory import (
    batch_size,
    compute_beta,
    contraction_modulus,
    general_error_bound,
    inner_budget,
    step_size_interval,
    theoretical_error_bound,
)

__version__ = "0.1.0"

__all__ = [
    "AcceleratedPrimalDual",
    "BloodMarket",
    "BoundOrderError",
    "BoundViolationError",
    "ConfigError",
    "DimensionTooLargeError",
    "DomainError",
    "InfeasibleConditionError",
    "InfeasibleSetError",
    "InnerSolveResult",
    "IterateRecord",
    "Mode",
    "MovingSet",
    "ParamConstraint",
    "ProjectionError",
    "QviProblem",
    "RunReport",
    "Sampling",
    "ScheduleOverflowError",
    "SolverConfig",
    "SqviError",
    "StochasticOracle",
    "StrongMonotonicityData",
    "VolumeKind",
    "affine_constraint",
    "batch_average",
    "batch_size",
    "build_example1",
    "build_example2",
    "compute_beta",
    "contraction_modulus",
    "estimate_constants",
    "feasibility_probe",
    "general_error_bound",
    "inner_budget",
    "make_synthetic",
    "natural_residual",
    "noise_diagnostic",
    "project_box",
    "project_exact",
    "project_inexact",
    "solve",
    "step_size_interval",
    "theoretical_error_bound",
]
