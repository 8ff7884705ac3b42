"""Adaptive sequential Monte Carlo samplers with incremental-KL step-size tuning."""

from ._accel import backend
from .adapt import (
    AdaptConfig,
    KLMCAdaptation,
    MALAAdaptation,
    StepsizeAdaptation,
    adapt_klmc,
    adapt_mala,
    adapt_stepsize,
    build_objective,
)
from .kernels import KLMCFamily, LMCFamily, MALAFamily, make_family
from .model import (
    AnnealedPath,
    Schedule,
    TargetModel,
    funnel,
    logistic_regression,
    make_schedule,
    shifted_gaussian,
)
from .optim1d import SearchParams, Triplet, bracket_minimum, find_feasible, golden_section_search, minimize
from .smc import FixedParams, RunConfig, RunResult, constant_params, ess, resample, smc_run

__version__ = "0.1.0"

__all__ = [
    "adapt_klmc",
    "adapt_mala",
    "adapt_stepsize",
    "AdaptConfig",
    "AnnealedPath",
    "backend",
    "bracket_minimum",
    "build_objective",
    "constant_params",
    "ess",
    "find_feasible",
    "FixedParams",
    "funnel",
    "golden_section_search",
    "KLMCAdaptation",
    "KLMCFamily",
    "LMCFamily",
    "logistic_regression",
    "make_family",
    "make_schedule",
    "MALAAdaptation",
    "MALAFamily",
    "minimize",
    "resample",
    "RunConfig",
    "RunResult",
    "Schedule",
    "SearchParams",
    "shifted_gaussian",
    "smc_run",
    "StepsizeAdaptation",
    "TargetModel",
    "Triplet",
]
