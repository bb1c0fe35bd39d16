"""Subgroup estimands and estimators for two-stage randomized experiments with interference."""

from .estimands import CLUSTER, CROSS, INDIVIDUAL, UNCONDITIONAL, Arm, Marginal, Target, estimand, parse_target
from .estimators import Family, Policy, estimate
from .model import Strategy, Undefined, load_design, load_population, resolve_design
from .oracle import EstimatorSpec, exact_moments, verify_all

__version__ = "0.1.0"

__all__ = [
    "CLUSTER", "CROSS", "INDIVIDUAL", "UNCONDITIONAL",
    "Arm", "Marginal", "Target", "estimand", "parse_target",
    "Family", "Policy", "estimate",
    "Strategy", "Undefined", "load_design", "load_population", "resolve_design",
    "EstimatorSpec", "exact_moments", "verify_all",
]
