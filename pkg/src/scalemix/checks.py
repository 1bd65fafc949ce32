"""Numerical self-checks run by ``scalemix check``.

Each check compares a library routine against an independent route to the
same quantity and reports the largest discrepancy it saw.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import priors, type1, type2
from .bench import ProblemSpec, gen_problem


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: max error {self.max_error:.3e} "
                f"(tol {self.tolerance:.0e}, {self.seconds:.2f} s)")


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def mixture_identity(tol: float = 1e-6) -> CheckResult:
    """Gaussian scale mixture with exponential mixing vs the Laplace density."""
    worst = 0.0
    for a in (0.5, 1.0, 2.0):
        for x in (0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 5.0, -5.0):
            err = abs(priors.laplacian_gsm_marginal(x, a) - 0.5 * a * math.exp(-a * abs(x)))
            worst = max(worst, err)
    return CheckResult("mixture-identity", worst <= tol, worst, tol)


@_timed
def weight_consistency(n: int = 1000, seed: int = 1, tol: float = 1e-10) -> CheckResult:
    """Closed-form GT weight vs the score identity with a complex-step derivative."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        p = float(rng.choice([1.0, 2.0]))
        q = float(rng.uniform(0.05, 20.0))
        sigma = float(rng.uniform(0.1, 5.0))
        x = float(rng.uniform(0.01, 10.0) * rng.choice([-1.0, 1.0]))
        prior = priors.GtPrior(sigma, p, q)
        dlogp = lambda v: priors.complex_step_grad(lambda z: priors.gt_log_density(z, prior), v)
        got = priors.weight_from_marginal(x, dlogp, p)
        want = priors.gt_weight(x, p, q, sigma)
        worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    return CheckResult("weight-consistency", worst <= tol, worst, tol)


def information_form_posterior(y, phi, gamma, noise_var):
    """Dense M x M oracle: Sigma = (G^-1 + Phi^T Phi / s2)^-1, mu = Sigma Phi^T y / s2."""
    prec = np.diag(1.0 / gamma) + phi.T @ phi / noise_var
    sigma = np.linalg.inv(prec)
    return sigma @ phi.T @ y / noise_var, np.diag(sigma)


@_timed
def posterior_equivalence(n: int = 100, seed: int = 2, tol: float = 1e-8) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        phi = rng.standard_normal((10, 20))
        y = rng.standard_normal(10)
        gamma = rng.uniform(0.1, 2.0, 20)
        s2 = float(rng.uniform(0.1, 1.0))
        post = type2.gaussian_posterior(y, phi, gamma, s2)
        mu, sd = information_form_posterior(y, phi, gamma, s2)
        err = max(np.max(np.abs(post.mu - mu)) / max(1.0, np.max(np.abs(mu))),
                  np.max(np.abs(post.sigma_diag - sd)) / max(1.0, np.max(sd)))
        worst = max(worst, float(err))
    return CheckResult("posterior-equivalence", worst <= tol, worst, tol)


def trace_violation(trace, eps_trace=None) -> float:
    """Largest relative increase between consecutive entries of an objective trace."""
    worst = 0.0
    for i in range(len(trace) - 1):
        if eps_trace and eps_trace[i] != eps_trace[i + 1]:
            continue
        inc = (trace[i + 1] - trace[i]) / max(1.0, abs(trace[i]))
        worst = max(worst, inc)
    return worst


@_timed
def em_monotonicity(n: int = 5, seed: int = 3, tol: float = 1e-9) -> CheckResult:
    """Type I objective traces never increase (per fixed-epsilon segment)."""
    rng = np.random.default_rng(seed)
    presets = [priors.Lasso(1.0), priors.ReweightedL1(0.1), priors.ReweightedL2(0.01),
               priors.ReweightedL2(1.0, anneal=True)]
    worst = 0.0
    for i in range(n):
        k = int(rng.integers(5, 26))
        prob = gen_problem(ProblemSpec(50, 250, k, "gaussian", int(rng.integers(2 ** 63))))
        for preset in presets:
            cfg = type1.Type1Config(preset, max_outer_iters=300 if getattr(preset, "anneal", False) else 30)
            res = type1.em_type1(prob, cfg)
            worst = max(worst, trace_violation(res.objective_trace, res.epsilon_trace))
    return CheckResult("em-monotonicity", worst <= tol, worst, tol)


@_timed
def update_roots(n: int = 1000, seed: int = 4, tol: float = 1e-9) -> CheckResult:
    """Every hyperparameter update solves its stationarity equation."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        s = float(10.0 ** rng.uniform(-8, 3))
        lam = float(10.0 ** rng.uniform(-6, 4))
        eps = float(10.0 ** rng.uniform(-3, 3))
        m = int(rng.integers(1, 1000))
        gamma = 10.0 ** rng.uniform(-6, 2, size=m)
        res = [
            type2.stationarity_residual("gamma_l1", type2.update_gamma_l1(0.0, s, lam), s=s, lam=lam),
            type2.stationarity_residual("gamma_rel1", type2.update_gamma_rel1(0.0, s, lam), s=s, lam=lam),
            type2.stationarity_residual("gamma_rel2", type2.update_gamma_rel2(0.0, s, eps), s=s, epsilon=eps),
            type2.stationarity_residual("lambda_l1", type2.update_lambda_l1(gamma, m), gamma=gamma, m=m),
            type2.stationarity_residual("lambda_rel1", type2.update_lambda_rel1(gamma, eps, m),
                                        gamma=gamma, m=m, epsilon=eps),
        ]
        worst = max(worst, max(res))
    return CheckResult("update-roots", worst <= tol, worst, tol)


ALL_CHECKS = (mixture_identity, weight_consistency, posterior_equivalence, update_roots,
              em_monotonicity)


def run_all() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]
