"""Bayesian sparse signal recovery with power-exponential scale-mixture priors.

Type I (MAP) estimation is available through :func:`em_type1`, Type II
(evidence maximization) through :func:`em_type2`, and the phase-transition
benchmark through :func:`run_sweep`.
"""
from .algorithms import ALGORITHMS, Algorithm, make_algorithm, benchmark_algorithms
from .bench import Problem, ProblemSpec, SweepReport, gen_problem, run_sweep, score
from .errors import DomainError, FullyPruned, NumericError, UnsupportedConfigurationError
from .priors import GgMixing, GtPrior, Lasso, PePrior, ReweightedL1, ReweightedL2
from .type1 import InnerSolverConfig, Type1Config, basis_pursuit, em_type1
from .type2 import L1, ReL1, ReL2, Type2Config, em_type2, gaussian_posterior

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "Algorithm", "make_algorithm", "benchmark_algorithms",
    "Problem", "ProblemSpec", "SweepReport", "gen_problem", "run_sweep", "score",
    "DomainError", "FullyPruned", "NumericError", "UnsupportedConfigurationError",
    "GgMixing", "GtPrior", "Lasso", "PePrior", "ReweightedL1", "ReweightedL2",
    "InnerSolverConfig", "Type1Config", "basis_pursuit", "em_type1",
    "L1", "ReL1", "ReL2", "Type2Config", "em_type2", "gaussian_posterior",
]
