"""Optimal refraction strategies for spectrally negative Levy processes with phase-type jumps."""

from .costs import GenericConvexCost, LinearCost, PolynomialCost, QuadraticCost, linear, quadratic
from .errors import (
    BracketFailure,
    ConfigError,
    LevyRefractError,
    ModelError,
    NumericalError,
    PoleError,
    RepeatedRootError,
    TailTruncationError,
)
from .levy_model import LevyModel, PhaseTypeLaw, Variation, exponential_law, weibull_example_model, weibull_standin
from .reflection import ReflectionProblem, b_star_inf, convergence_sweep, v_tilde_inf
from .refraction import (
    RefractionProblem,
    RefractionSolution,
    ThresholdKind,
    find_b_star,
    mean_running_infimum,
    solve,
    value_derivative,
    value_v_b,
    verify_solution,
)
from .scale_functions import ScaleSet, build_scale, build_scale_set
from .simulation import McEstimate, SimConfig, estimate_mean_infimum, estimate_npv

__version__ = "0.1.0"
