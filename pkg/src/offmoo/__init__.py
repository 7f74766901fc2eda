"""Offline multi-objective policy optimization with pessimistic IPS hypervolume estimates."""

from .benchmarks import BenchmarkProblem, TestFunction, make_problem, make_test_function
from .estimators import ConfidenceConfig, OfflineData, ValueEstimate, estimate
from .hypervolume import HypervolumeMethod, hypervolume
from .logged_data import LoggedDataset, generate, load, save
from .optimize import GradientConfig, Objective, greedy_select, optimize_policies, random_policy_baseline
from .policy import LoggingPolicy, PolicySet, SoftmaxPolicy

__version__ = "0.1.0"

__all__ = [
    "BenchmarkProblem",
    "ConfidenceConfig",
    "GradientConfig",
    "HypervolumeMethod",
    "LoggedDataset",
    "LoggingPolicy",
    "Objective",
    "OfflineData",
    "PolicySet",
    "SoftmaxPolicy",
    "TestFunction",
    "ValueEstimate",
    "estimate",
    "generate",
    "greedy_select",
    "hypervolume",
    "load",
    "make_problem",
    "make_test_function",
    "optimize_policies",
    "random_policy_baseline",
    "save",
]
