"""Named solver configurations used by the benchmark and the CLI.

The six names reproduce the experimental line-up: basis pursuit, Type II
l1 (fixed lambda = 5), Type I reweighted l1 (eps = 0.1), Type II reweighted
l1 (eps = 100), Type I reweighted l2 (annealed eps) and Type II reweighted
l2 with eps = 0 (sparse Bayesian learning).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .errors import DomainError
from .priors import Lasso, ReweightedL1, ReweightedL2
from .type1 import Type1Config, basis_pursuit, em_type1
from .type2 import L1, ReL1, ReL2, Type2Config, em_type2

NOISE_VAR = 1e-6


@dataclass(frozen=True)
class Algorithm:
    """A named solver: ``solve(problem)`` returns ``(x_hat, info_dict)``."""

    name: str
    solve: Callable
    params: dict = field(default_factory=dict)

    def __call__(self, problem):
        return self.solve(problem)


def _run_bp(problem):
    res = basis_pursuit(problem.y, problem.phi)
    return res.x_hat, {"converged": res.converged, "residual": res.residual,
                       "stages": len(res.lambdas)}


def _run_type1(problem, cfg: Type1Config):
    res = em_type1(problem, cfg)
    return res.x_hat, {"converged": res.converged, "iterations": res.outer_iters,
                       "objective": res.objective_trace[-1]}


def _run_type2(problem, cfg: Type2Config):
    res = em_type2(problem, cfg)
    return res.x_hat, {"converged": res.converged, "iterations": res.iters,
                       "active": int(np.count_nonzero(res.gamma)),
                       "lambda": res.lam,
                       "max_gamma_change": res.gamma_trace[-1] if res.gamma_trace else None}


ALGORITHMS = ("bp", "type2-l1", "rw-l1", "type2-rw-l1", "rw-l2", "type2-rw-l2")
EXTRA_ALGORITHMS = ("lasso",)
ALIASES = {"type2-rel1": "type2-rw-l1", "type2-rel2": "type2-rw-l2", "sbl": "type2-rw-l2"}


def make_algorithm(name: str, noise_var: float | None = None, epsilon: float | None = None,
                   lam: float | None = None, update_lambda: bool | None = None) -> Algorithm:
    """Build a named algorithm, optionally overriding its main parameters."""
    name = ALIASES.get(name, name)
    nv = NOISE_VAR if noise_var is None else float(noise_var)
    if name == "bp":
        return Algorithm(name, _run_bp, {})
    if name == "lasso":
        preset = Lasso(1.0 if lam is None else lam)
        cfg = Type1Config(preset, noise_var=nv)
        return Algorithm(name, partial(_run_type1, cfg=cfg), {"lambda": preset.lam, "noise_var": nv})
    if name == "rw-l1":
        preset = ReweightedL1(0.1 if epsilon is None else epsilon)
        cfg = Type1Config(preset, noise_var=nv)
        return Algorithm(name, partial(_run_type1, cfg=cfg),
                         {"epsilon": preset.epsilon, "noise_var": nv})
    if name == "rw-l2":
        if epsilon is None:
            preset = ReweightedL2(1.0, anneal=True)
            cfg = Type1Config(preset, noise_var=nv, max_outer_iters=300)
        else:
            preset = ReweightedL2(epsilon)
            cfg = Type1Config(preset, noise_var=nv)
        return Algorithm(name, partial(_run_type1, cfg=cfg),
                         {"epsilon": preset.epsilon, "anneal": preset.anneal,
                          "max_outer_iters": cfg.max_outer_iters, "noise_var": nv})
    if name == "type2-l1":
        rule = L1(5.0 if lam is None else lam, update_lambda=bool(update_lambda))
        cfg = Type2Config(rule, noise_var=nv)
        return Algorithm(name, partial(_run_type2, cfg=cfg),
                         {"lambda": rule.lambda_init, "update_lambda": rule.update_lambda,
                          "noise_var": nv})
    if name == "type2-rw-l1":
        rule = ReL1(100.0 if epsilon is None else epsilon, 1.0 if lam is None else lam,
                    update_lambda=bool(update_lambda))
        cfg = Type2Config(rule, noise_var=nv)
        return Algorithm(name, partial(_run_type2, cfg=cfg),
                         {"epsilon": rule.epsilon, "lambda": rule.lambda_init,
                          "update_lambda": rule.update_lambda, "noise_var": nv})
    if name == "type2-rw-l2":
        rule = ReL2(0.0 if epsilon is None else epsilon)
        cfg = Type2Config(rule, noise_var=nv)
        return Algorithm(name, partial(_run_type2, cfg=cfg),
                         {"epsilon": rule.epsilon, "noise_var": nv})
    raise DomainError(f"unknown algorithm {name!r}; valid names: "
                      + ", ".join(ALGORITHMS + EXTRA_ALGORITHMS))


def benchmark_algorithms() -> list[Algorithm]:
    return [make_algorithm(name) for name in ALGORITHMS]
