"""Type II (evidence maximization) sparse recovery.

EM over the posterior of x given the variances gamma: the E-step is the
Gaussian posterior N(mu, Sigma) induced by x_i ~ N(0, gamma_i), the M-step
applies one of the hyperparameter update rules below. Coordinates whose
variance falls below the pruning threshold are removed for good.

Update rules, with ``s_i = mu_i^2 + Sigma_ii``:

=========  =========================================  ===============================
rule       gamma update                               lambda update
=========  =========================================  ===============================
L1         (-1 + sqrt(1 + 4 lam s)) / (2 lam)          2 M / sum(gamma)
ReL1       (-1 + sqrt(1 + 4 lam^2 s)) / (2 lam^2)      positive root of
                                                      (2M+eps-1)/lam - lam sum(gamma) - eps
ReL2       (s + 2 eps) / (2 eps + 1)                  --
=========  =========================================  ===============================

ReL2 with eps = 0 is sparse Bayesian learning (gamma <- s).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import linalg

from .errors import DomainError, FullyPruned, NumericError, UnsupportedConfigurationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class L1:
    lambda_init: float = 5.0
    update_lambda: bool = False

    def __post_init__(self):
        if not self.lambda_init > 0:
            raise DomainError("lambda_init must be positive")


@dataclass(frozen=True)
class ReL1:
    epsilon: float = 100.0
    lambda_init: float = 1.0
    update_lambda: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not self.lambda_init > 0:
            raise DomainError("lambda_init must be positive")


@dataclass(frozen=True)
class ReL2:
    epsilon: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise DomainError("epsilon must be >= 0")


Type2Rule = Union[L1, ReL1, ReL2]


@dataclass(frozen=True)
class Type2Config:
    rule: Type2Rule = field(default_factory=ReL2)
    noise_var: float = 1e-6
    gamma_init: object = 1.0
    prune_rel: float = 1e-8
    prune_floor: float = 1e-12
    max_iters: int = 1000
    tol: float = 1e-8

    def __post_init__(self):
        if not isinstance(self.rule, (L1, ReL1, ReL2)):
            raise DomainError(f"unknown Type II rule {self.rule!r}")
        if not self.noise_var > 0:
            raise DomainError("noise_var must be positive")
        if np.any(~(np.asarray(self.gamma_init, dtype=float) > 0)):
            raise DomainError("gamma_init must be positive")
        if not (self.prune_rel > 0 and self.prune_floor > 0):
            raise DomainError("prune thresholds must be positive")
        if self.max_iters < 1 or not self.tol > 0:
            raise DomainError("max_iters must be >= 1 and tol > 0")


@dataclass
class Posterior:
    mu: np.ndarray
    sigma_diag: np.ndarray
    active: np.ndarray


@dataclass
class Type2Result:
    x_hat: np.ndarray
    gamma: np.ndarray
    lam: float | None
    iters: int
    converged: bool
    gamma_trace: list = field(default_factory=list)


def gaussian_posterior(y, phi, gamma, noise_var: float) -> Posterior:
    """Posterior mean and marginal variances of x given gamma.

    mu = G Phi^T B^{-1} y and diag(Sigma) = gamma - gamma^2 diag(Phi^T B^{-1} Phi)
    with B = noise_var I + Phi G Phi^T, factorized by Cholesky over the
    active (gamma > 0) columns only.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    n, m = phi.shape
    if y.shape != (n,) or gamma.shape != (m,):
        raise DomainError(f"dimension mismatch: Phi {phi.shape}, y {y.shape}, gamma {gamma.shape}")
    if not noise_var > 0:
        raise DomainError("noise_var must be positive")
    if np.any(~(gamma >= 0)):
        raise DomainError("gamma must be nonnegative")

    active = np.flatnonzero(gamma > 0)
    mu = np.zeros(m)
    sigma = np.zeros(m)
    if active.size == 0:
        return Posterior(mu, sigma, active)
    pa = phi[:, active]
    ga = gamma[active]
    b = (pa * ga) @ pa.T
    b.flat[:: n + 1] += noise_var
    try:
        c = linalg.cholesky(b, lower=True)
    except linalg.LinAlgError:
        b.flat[:: n + 1] += 1e-12 * np.trace(b) / n
        try:
            c = linalg.cholesky(b, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericError(f"posterior factorization failed: {exc}") from exc
    u = linalg.solve_triangular(c, pa, lower=True)
    v = linalg.solve_triangular(c, y, lower=True)
    mu[active] = ga * (u.T @ v)
    s = ga - ga * ga * np.einsum("ij,ij->j", u, u)
    sigma[active] = np.clip(s, 0.0, ga)
    return Posterior(mu, sigma, active)


def _stable_root(s, a):
    # positive root of a g^2 + g - s = 0, written without cancellation
    return 2.0 * s / (1.0 + np.sqrt(1.0 + 4.0 * a * s))


def update_gamma_l1(mu_i, sigma_ii, lam):
    if not lam > 0:
        raise DomainError("lambda must be positive")
    return _stable_root(np.square(mu_i) + sigma_ii, lam)


def update_lambda_l1(gamma, m: int) -> float:
    total = float(np.sum(gamma))
    if total <= 0:
        raise FullyPruned("all gamma are zero")
    return 2.0 * m / total


def update_gamma_rel1(mu_i, sigma_ii, lam):
    if not lam > 0:
        raise DomainError("lambda must be positive")
    return _stable_root(np.square(mu_i) + sigma_ii, lam * lam)


def update_lambda_rel1(gamma, epsilon: float, m: int) -> float:
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    c = 2.0 * m + epsilon - 1.0
    if not c > 0:
        raise DomainError("2M + epsilon - 1 must be positive")
    total = float(np.sum(gamma))
    if total <= 0:
        raise FullyPruned("all gamma are zero")
    # (-eps + sqrt(eps^2 + 4 c S)) / (2 S) == 2 c / (eps + sqrt(eps^2 + 4 c S))
    return 2.0 * c / (epsilon + math.sqrt(epsilon * epsilon + 4.0 * c * total))


def update_gamma_rel2(mu_i, sigma_ii, epsilon):
    if not epsilon >= 0:
        raise DomainError("epsilon must be >= 0")
    return (np.square(mu_i) + sigma_ii + 2.0 * epsilon) / (2.0 * epsilon + 1.0)


def update_gamma_noninformative(abs_moment_p, p: float):
    """Flat-hyperprior update ``gamma = p <|x|^p>``; only p = 2 has a closed-form E-step."""
    if p != 2:
        raise UnsupportedConfigurationError(
            "the E-step <|x|^p> has no closed form for p != 2")
    if np.any(np.asarray(abs_moment_p) < 0):
        raise DomainError("moments must be nonnegative")
    return p * np.asarray(abs_moment_p, dtype=float) if np.ndim(abs_moment_p) else p * float(abs_moment_p)


def stationarity_residual(rule: str, value: float, **kw) -> float:
    """Relative residual of the equation each update solves (0 at the exact root).

    ``rule`` is one of ``gamma_l1``, ``gamma_rel1``, ``gamma_rel2``,
    ``lambda_l1``, ``lambda_rel1``; keyword arguments carry ``s``, ``lam``,
    ``epsilon``, ``gamma`` and ``m`` as needed.
    """
    if rule == "gamma_l1":
        s, lam = kw["s"], kw["lam"]
        terms = (lam * value * value, value, -s)
    elif rule == "gamma_rel1":
        s, lam = kw["s"], kw["lam"]
        terms = (lam * lam * value * value, value, -s)
    elif rule == "gamma_rel2":
        s, eps = kw["s"], kw["epsilon"]
        terms = ((2 * eps + 1) * value, -s, -2 * eps)
    elif rule == "lambda_l1":
        total, m = float(np.sum(kw["gamma"])), kw["m"]
        terms = (m / value, -0.5 * total)
    elif rule == "lambda_rel1":
        total, m, eps = float(np.sum(kw["gamma"])), kw["m"], kw["epsilon"]
        terms = ((2 * m + eps - 1) / value, -value * total, -eps)
    else:
        raise DomainError(f"unknown rule {rule!r}")
    scale = sum(abs(t) for t in terms)
    return abs(sum(terms)) / scale if scale else 0.0


def em_type2(problem, cfg: Type2Config) -> Type2Result:
    """Run Type II EM on ``problem`` (anything with ``phi`` and ``y``)."""
    phi = np.asarray(problem.phi, dtype=float)
    y = np.asarray(problem.y, dtype=float)
    if phi.ndim != 2 or y.shape != (phi.shape[0],):
        raise DomainError(f"dimension mismatch: Phi {phi.shape}, y {y.shape}")
    m = phi.shape[1]
    rule = cfg.rule
    gamma = np.broadcast_to(np.asarray(cfg.gamma_init, dtype=float), (m,)).copy()
    lam = getattr(rule, "lambda_init", None)
    if not np.any(y):
        # mu = 0 for every gamma and the evidence grows as gamma -> 0
        log.debug("em_type2: zero data, every coordinate pruned")
        return Type2Result(np.zeros(m), np.zeros(m), lam, 1, True, [1.0])
    trace = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        post = gaussian_posterior(y, phi, gamma, cfg.noise_var)
        a = post.active
        mu, sig = post.mu[a], post.sigma_diag[a]
        new = np.zeros(m)
        if isinstance(rule, ReL2):
            new[a] = update_gamma_rel2(mu, sig, rule.epsilon)
        elif isinstance(rule, L1):
            new[a] = update_gamma_l1(mu, sig, lam)
        else:
            new[a] = update_gamma_rel1(mu, sig, lam)

        top = float(np.max(new)) if a.size else 0.0
        new[new < max(cfg.prune_rel * top, cfg.prune_floor)] = 0.0
        change = float(np.max(np.abs(new - gamma))) / float(np.max(gamma))
        trace.append(change)
        gamma = new
        if not np.any(gamma):
            log.debug("em_type2: all coordinates pruned after %d iterations", it)
            return Type2Result(np.zeros(m), gamma, lam, it, True, trace)
        if getattr(rule, "update_lambda", False):
            if isinstance(rule, L1):
                lam = update_lambda_l1(gamma, m)
            else:
                lam = update_lambda_rel1(gamma, rule.epsilon, m)
        if change < cfg.tol:
            converged = True
            break
    post = gaussian_posterior(y, phi, gamma, cfg.noise_var)
    return Type2Result(post.mu, gamma, lam, it, converged, trace)
