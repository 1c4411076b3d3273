"""Totally asynchronous block-based multi-agent quadratic programming."""
from .block_norm import NormScheme, block_max_norm, induced_norm_bound, initial_radius, set_index
from .planner import (
    GammaMatrix,
    InfeasibleError,
    StepsizeInterval,
    contraction_factor,
    error_bound,
    plan_regularization,
    stepsize_interval,
)
from .problem_gen import GenSpec, even_partition, generate_problem
from .qp_model import (
    BlockPartition,
    Box,
    ProblemError,
    QuadraticProblem,
    RegularizationChoice,
    exact_minimizer,
    regularize,
    spectral_bounds,
    spectral_exact,
)
from .sim import ActivationSchedule, DelayModel, DelayRule, SimTrace, run

__version__ = "0.1.0"
