"""Power exponential scale mixture (PESM) priors.

Densities of the power exponential (PE), generalized t (GT) and inverse
generalized gamma (GG) families, the Laplace-as-Gaussian-scale-mixture
identity, and the E-step weights E[1/gamma^p | x] that drive the Type I
EM iteration.

All density functions work on scalars or numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import integrate
from scipy.special import betaln, gammaln

from .errors import DomainError, NumericError

QUAD_RTOL = 1e-8


def _require_positive(**params):
    for name, value in params.items():
        if not (np.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be a finite positive number, got {value!r}")


def _abs(x):
    # |x| that stays holomorphic off the imaginary axis, so complex-step
    # differentiation of the log-densities works.
    if np.iscomplexobj(x):
        return x * np.sign(np.real(x))
    return np.abs(x)


@dataclass(frozen=True)
class PePrior:
    """Zero-mean power exponential density with shape ``p`` and scale ``sigma``."""

    p: float
    sigma: float

    def __post_init__(self):
        _require_positive(p=self.p, sigma=self.sigma)


@dataclass(frozen=True)
class GtPrior:
    """Generalized t density ``eta / (1 + |x|^p / (q sigma^p))^(q + 1/p)``.

    ``log_eta`` is the exact log normalizer,
    ``log p - log 2 - log sigma - log(q)/p - log B(1/p, q)``.
    """

    sigma: float
    p: float
    q: float
    log_eta: float = field(init=False, repr=False)

    def __post_init__(self):
        _require_positive(sigma=self.sigma, p=self.p, q=self.q)
        log_eta = (math.log(self.p) - math.log(2.0) - math.log(self.sigma)
                   - math.log(self.q) / self.p - betaln(1.0 / self.p, self.q))
        object.__setattr__(self, "log_eta", float(log_eta))


@dataclass(frozen=True)
class GgMixing:
    """Inverse generalized gamma mixing density GG(gamma; -p, sigma, q).

    Proportional to ``(sigma/gamma)^(p q + 1) exp(-(sigma/gamma)^p)`` on
    gamma > 0, with normalizer ``p / (sigma Gamma(q))``.
    """

    p: float
    sigma: float
    q: float

    def __post_init__(self):
        _require_positive(p=self.p, sigma=self.sigma, q=self.q)

    @property
    def log_eta(self) -> float:
        return math.log(self.p) - math.log(self.sigma) - float(gammaln(self.q))


def pe_log_density(x, prior: PePrior):
    p, s = prior.p, prior.sigma
    log_norm = math.log(p) - math.log(2.0 * s) - float(gammaln(1.0 / p))
    return log_norm - (_abs(x) / s) ** p


def gt_log_density(x, prior: GtPrior):
    p, q, s = prior.p, prior.q, prior.sigma
    return prior.log_eta - (q + 1.0 / p) * np.log1p(_abs(x) ** p / (q * s ** p))


def gt_log_density_grad(x, prior: GtPrior):
    """Analytic d/dx of :func:`gt_log_density` (valid for x != 0 when p < 1)."""
    p, q, s = prior.p, prior.q, prior.sigma
    ax = np.abs(x)
    return -(q + 1.0 / p) * p * ax ** (p - 1.0) * np.sign(x) / (q * s ** p + ax ** p)


def gg_log_density(gamma, mixing: GgMixing):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise DomainError("GG mixing density is supported on gamma > 0 only")
    p, q, s = mixing.p, mixing.q, mixing.sigma
    r = s / gamma
    out = mixing.log_eta + (p * q + 1.0) * np.log(r) - r ** p
    return out if out.ndim else float(out)


def integrate_halfline(f: Callable[[float], float], rtol: float = QUAD_RTOL,
                       atol: float = 1e-13) -> float:
    """Adaptive quadrature of ``f`` over (0, inf) via gamma = t / (1 - t)."""

    def g(t):
        if t <= 0.0 or t >= 1.0:
            return 0.0
        u = 1.0 - t
        return f(t / u) / (u * u)

    # A breakpoint at t = 1/2 (gamma = 1) keeps the spike-at-zero and the
    # heavy tail on separate subintervals.
    val, err, info, *msg = integrate.quad(g, 0.0, 1.0, epsabs=atol, epsrel=rtol,
                                          limit=400, points=[0.5], full_output=1)
    if msg and err > max(atol, rtol * abs(val)) * 10:
        raise NumericError(f"quadrature did not converge: {msg[0]} "
                           f"(value={val}, error estimate={err})")
    return float(val)


def scale_mixture_marginal(x: float, conditional_pdf, mixing_pdf,
                           rtol: float = QUAD_RTOL) -> float:
    """Numerically evaluate the PESM marginal ``int p(x|g) p(g) dg``."""
    return integrate_halfline(lambda g: conditional_pdf(x, g) * mixing_pdf(g), rtol=rtol)


def laplacian_gsm_marginal(x: float, a: float, rtol: float = QUAD_RTOL) -> float:
    """Laplace density obtained as a Gaussian scale mixture with exponential mixing.

    Integrates N(x; 0, gamma) * (a^2/2) exp(-a^2 gamma / 2) over gamma > 0,
    which should reproduce (a/2) exp(-a |x|).
    """
    _require_positive(a=a)
    a2 = a * a

    def normal(x, g):
        return math.exp(-x * x / (2.0 * g)) / math.sqrt(2.0 * math.pi * g)

    def expo(g):
        return 0.5 * a2 * math.exp(-0.5 * a2 * g)

    return scale_mixture_marginal(float(x), normal, expo, rtol=rtol)


def gt_weight(x, p: float, q: float, sigma: float):
    """Type I E-step weight ``E[1/gamma^p | x] = (q + 1/p) / (q sigma^p + |x|^p)``."""
    _require_positive(p=p, q=q, sigma=sigma)
    return (q + 1.0 / p) / (q * sigma ** p + np.abs(x) ** p)


def weight_from_marginal(x, dlogp: Callable, p: float):
    """E[1/gamma^p | x] from the score of the marginal.

    Uses ``-(d/dx log p(x)) / (p |x|^(p-1) sign(x))``; ``dlogp`` maps x to
    d/dx log p(x). Undefined at x = 0, where the closed-form weight of the
    particular prior must be used instead.
    """
    _require_positive(p=p)
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise DomainError("weight_from_marginal is undefined at x = 0")
    out = -np.asarray(dlogp(x)) / (p * np.abs(x) ** (p - 1.0) * np.sign(x))
    return out if out.ndim else float(out)


def complex_step_grad(f: Callable, x, h: float = 1e-30):
    """Derivative of a real-analytic ``f`` by the complex-step method."""
    x = np.asarray(x, dtype=float)
    return np.imag(f(x + 1j * h)) / h


# ---------------------------------------------------------------------------
# Presets: rows of the GT table that correspond to Type I algorithms.


@dataclass(frozen=True)
class Lasso:
    """Laplace prior (GT with p = 1, q -> inf, sigma = 1), penalty ``lam |x|``."""

    lam: float

    p = 1.0
    q = math.inf
    sigma = 1.0

    def __post_init__(self):
        _require_positive(lam=self.lam)

    def weights(self, x):
        # closed-form q -> inf limit of the GT weight, scaled by lam
        return np.full(np.shape(x), float(self.lam))

    def penalty(self, x):
        return self.lam * np.abs(x)


@dataclass(frozen=True)
class ReweightedL1:
    """GT(sigma=1, p=1, q=eps); penalty ``(1 + eps) log(eps + |x|)``."""

    epsilon: float

    p = 1.0
    sigma = 1.0

    def __post_init__(self):
        _require_positive(epsilon=self.epsilon)

    @property
    def q(self):
        return self.epsilon

    def weights(self, x):
        eps = self.epsilon
        return (1.0 + eps) / (eps + np.abs(x))

    def penalty(self, x):
        eps = self.epsilon
        return (1.0 + eps) * np.log(eps + np.abs(x))


@dataclass(frozen=True)
class ReweightedL2:
    """GT(sigma=sqrt 2, p=2, q=eps); penalty ``(eps + 1/2) log(2 eps + x^2)``.

    With ``anneal=True`` the Type I solver treats ``epsilon`` as the starting
    value of a decreasing schedule instead of holding it fixed.
    """

    epsilon: float
    anneal: bool = False

    p = 2.0
    sigma = math.sqrt(2.0)

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon!r}")

    @property
    def q(self):
        return self.epsilon

    def with_epsilon(self, epsilon: float) -> "ReweightedL2":
        return ReweightedL2(epsilon, self.anneal)

    def weights(self, x):
        eps = self.epsilon
        with np.errstate(divide="ignore"):
            return (eps + 0.5) / (2.0 * eps + np.square(x))

    def penalty(self, x):
        eps = self.epsilon
        with np.errstate(divide="ignore"):
            return (eps + 0.5) * np.log(2.0 * eps + np.square(x))


PriorPreset = Union[Lasso, ReweightedL1, ReweightedL2]
PRESET_TYPES = (Lasso, ReweightedL1, ReweightedL2)
