"""Type I (MAP) sparse recovery by EM over the scale-mixture hidden variables.

The E-step evaluates the weights ``w_i = E[1/gamma_i^p | x_i]`` of the
chosen preset; the M-step minimizes

    (1 / 2 sigma^2) ||y - Phi x||^2 + sum_i w_i |x_i|^p

for p = 1 (accelerated proximal gradient) or p = 2 (closed form).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

from .errors import DomainError, NumericError
from .priors import Lasso, PriorPreset, ReweightedL1, ReweightedL2

log = logging.getLogger(__name__)

EPS_FLOOR = 1e-8


@dataclass(frozen=True)
class InnerSolverConfig:
    """Settings of the weighted l1 (proximal gradient) solver.

    ``continuation`` enables a geometric homotopy on the weights when no
    warm start is given; it changes the path, not the minimizer.
    ``polish_every`` > 0 periodically solves the optimality system on the
    current support and stops early if that point passes the KKT test
    (0 disables it).
    ``lp_warm_start`` first solves the weighted basis pursuit LP and polishes
    its support; a KKT-certified result is returned directly, otherwise the
    LP point seeds the proximal gradient iteration.
    """

    max_iters: int = 50_000
    tol: float = 1e-10
    step_rule: str = "fixed-Lipschitz"
    power_iters: int = 20
    continuation: bool = True
    polish_every: int = 25
    lp_warm_start: bool = True

    def __post_init__(self):
        if self.max_iters < 1 or self.power_iters < 1:
            raise DomainError("iteration counts must be >= 1")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.step_rule not in ("fixed-Lipschitz", "backtracking"):
            raise DomainError(f"unknown step_rule {self.step_rule!r}")


@dataclass(frozen=True)
class Type1Config:
    preset: PriorPreset
    noise_var: float = 1e-6
    max_outer_iters: int = 30
    outer_tol: float = 1e-6
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)

    def __post_init__(self):
        if not isinstance(self.preset, (Lasso, ReweightedL1, ReweightedL2)):
            raise DomainError(f"unsupported preset {self.preset!r}")
        if not self.noise_var > 0:
            raise DomainError("noise_var must be positive")
        if self.max_outer_iters < 1:
            raise DomainError("max_outer_iters must be >= 1")
        if not self.outer_tol > 0:
            raise DomainError("outer_tol must be positive")


@dataclass
class Type1Result:
    x_hat: np.ndarray
    weights: np.ndarray
    objective_trace: list
    outer_iters: int
    converged: bool
    # epsilon under which each objective_trace entry was evaluated; only
    # varies for the annealed reweighted-l2 preset
    epsilon_trace: list = field(default_factory=list)


@dataclass
class BasisPursuitResult:
    x_hat: np.ndarray
    converged: bool
    residual: float
    lambdas: list


def _check_system(y, phi):
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float)
    if phi.ndim != 2 or y.ndim != 1 or phi.shape[0] != y.shape[0]:
        raise DomainError(f"dimension mismatch: Phi {phi.shape}, y {y.shape}")
    return y, phi


def _check_weights(w, m):
    w = np.asarray(w, dtype=float)
    if w.shape != (m,):
        raise DomainError(f"weights must have shape ({m},), got {w.shape}")
    if np.any(~(w > 0)):
        raise DomainError("weights must be strictly positive")
    return w


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lipschitz_estimate(phi, n_iters: int = 20) -> float:
    """Largest eigenvalue of Phi^T Phi by power iteration from a fixed start."""
    v = np.ones(phi.shape[1]) / math.sqrt(phi.shape[1])
    lam = 0.0
    for _ in range(n_iters):
        u = phi.T @ (phi @ v)
        lam = float(np.linalg.norm(u))
        if lam == 0.0:
            return 0.0
        v = u / lam
    return lam


def weighted_l2_step(y, phi, w, noise_var: float):
    """Minimize ``||y - Phi x||^2 / (2 noise_var) + sum_i w_i x_i^2``.

    Solved in the N x N form ``x = C Phi^T (Phi C Phi^T + noise_var I)^{-1} y``
    with ``C = diag(1 / (2 w))``; infinite weights pin coordinates at zero.
    """
    y, phi = _check_system(y, phi)
    w = _check_weights(w, phi.shape[1])
    if not noise_var > 0:
        raise DomainError("noise_var must be positive")
    c = 0.5 / w
    a = (phi * c) @ phi.T
    a.flat[:: a.shape[0] + 1] += noise_var
    try:
        b = linalg.cho_solve(linalg.cho_factor(a, lower=True), y)
    except linalg.LinAlgError as exc:
        raise NumericError(f"weighted l2 system is not positive definite: {exc}") from exc
    return c * (phi.T @ b)


def weighted_l1_objective(x, y, phi, w, noise_var):
    r = y - phi @ x
    return 0.5 * float(r @ r) / noise_var + float(w @ np.abs(x))


def _apg(y, phi, thr, x0, lip, cfg, backtracking):
    """Proximal gradient with momentum and function-value restart.

    Minimizes ``0.5 ||y - Phi x||^2 + sum thr_i |x_i|``. Returns the best
    iterate, so the result never has a larger objective than ``x0``.
    """
    x = x0.copy()
    px = phi @ x
    r = y - px
    fx = 0.5 * float(r @ r) + float(thr @ np.abs(x))
    z, pz = x, px
    t = 1.0
    converged = False
    last_support = None
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad = phi.T @ (pz - y)
        while True:
            u = soft_threshold(z - grad / lip, thr / lip)
            pu = phi @ u
            ru = y - pu
            fu = 0.5 * float(ru @ ru) + float(thr @ np.abs(u))
            if not backtracking:
                break
            d = u - z
            rz = y - pz
            # sufficient decrease of the smooth part
            q = 0.5 * float(rz @ rz) + float(grad @ d) + 0.5 * lip * float(d @ d)
            if 0.5 * float(ru @ ru) <= q * (1 + 1e-12):
                break
            lip *= 2.0
        if fu > fx:
            # restart from the best point with a plain proximal step
            if t == 1.0 and z is x:
                if fu - fx > 1e-12 * max(abs(fx), 1e-300):
                    # plain step went uphill: the Lipschitz estimate was low
                    lip *= 1.5
                    continue
                converged = True
                break
            z, pz, t = x, px, 1.0
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_new
        change = fx - fu
        x_old, px_old = x, px
        x, px, fx = u, pu, fu
        z = x + beta * (x - x_old)
        pz = px + beta * (px - px_old)
        t = t_new
        if change <= cfg.tol * max(abs(fx), 1e-300):
            converged = True
            break
        if cfg.polish_every and it % cfg.polish_every == 0:
            support = np.flatnonzero(x)
            key = support.tobytes()
            if key == last_support:
                cand = _polish(y, phi, thr, x, support)
                if cand is not None:
                    pc = phi @ cand
                    rc = y - pc
                    fc = 0.5 * float(rc @ rc) + float(thr @ np.abs(cand))
                    if fc <= fx + 1e-12 * abs(fx):
                        x, fx = cand, fc
                        converged = True
                        break
            last_support = key
    return x, it, converged, lip


def _lp_candidate(y, phi, w, thr):
    """Weighted basis pursuit by LP, then the exact penalized fit on its support.

    Returns ``(x, certified)``; ``x`` is None when the LP fails.
    """
    m = phi.shape[1]
    res = optimize.linprog(np.concatenate([w, w]), A_eq=np.hstack([phi, -phi]), b_eq=y,
                           bounds=(0, None), method="highs")
    if res.status != 0:
        return None, False
    x_lp = res.x[:m] - res.x[m:]
    big = float(np.max(np.abs(x_lp)))
    support = np.flatnonzero(np.abs(x_lp) > 1e-12 * big)
    cand = _polish(y, phi, thr, x_lp, support)
    if cand is None:
        return x_lp, False
    return cand, True


def _polish(y, phi, thr, x, support):
    """Exact minimizer for the sign pattern of ``x``, or None if KKT fails."""
    n = phi.shape[0]
    if support.size == 0 or support.size > n:
        return None
    ps = phi[:, support]
    signs = np.sign(x[support])
    g = ps.T @ ps
    try:
        xs = linalg.cho_solve(linalg.cho_factor(g, lower=True),
                              ps.T @ y - thr[support] * signs)
    except linalg.LinAlgError:
        return None
    if np.any(np.sign(xs) != signs):
        return None
    cand = np.zeros_like(x)
    cand[support] = xs
    corr = np.abs(phi.T @ (y - ps @ xs))
    off = np.ones(x.shape, dtype=bool)
    off[support] = False
    if np.any(corr[off] > thr[off] * (1.0 + 1e-9)):
        return None
    return cand


def weighted_l1_step(y, phi, w, noise_var: float, cfg: InnerSolverConfig | None = None,
                     x0=None, full_output: bool = False):
    """Approximately minimize ``||y - Phi x||^2 / (2 noise_var) + sum_i w_i |x_i|``.

    Accelerated proximal gradient on the equivalent problem scaled by
    ``noise_var``; soft-thresholding level ``noise_var * w_i * step``. Stops
    when the relative objective change falls below ``cfg.tol``.

    With ``full_output=True`` returns ``(x, info)`` where ``info`` holds the
    iteration count and the convergence flag.
    """
    cfg = cfg or InnerSolverConfig()
    y, phi = _check_system(y, phi)
    m = phi.shape[1]
    w = _check_weights(w, m)
    if not noise_var > 0:
        raise DomainError("noise_var must be positive")
    # power iteration approaches from below; the margin keeps the step stable
    lip = 1.05 * lipschitz_estimate(phi, cfg.power_iters)
    thr = noise_var * w
    backtracking = cfg.step_rule == "backtracking"
    total = 0
    if lip == 0.0 or not np.any(y):
        # zero data or zero dictionary: x = 0 attains the minimum
        info = {"iters": 0, "converged": True}
        return (np.zeros(m), info) if full_output else np.zeros(m)

    if np.all(np.abs(phi.T @ y) <= thr):
        # x = 0 satisfies the optimality conditions
        info = {"iters": 0, "converged": True}
        return (np.zeros(m), info) if full_output else np.zeros(m)

    def objective(v):
        r = y - phi @ v
        return 0.5 * float(r @ r) + float(thr @ np.abs(v))

    start = None if x0 is None else np.asarray(x0, dtype=float).copy()
    if start is not None and start.shape != (m,):
        raise DomainError(f"x0 must have shape ({m},)")
    if cfg.lp_warm_start:
        x_lp, certified = _lp_candidate(y, phi, w, thr)
        if x_lp is not None:
            f_lp = objective(x_lp)
            if start is None or f_lp <= objective(start) + 1e-12 * abs(f_lp):
                if certified:
                    info = {"iters": 0, "converged": True}
                    return (x_lp, info) if full_output else x_lp
                start = x_lp

    if start is None:
        x = np.zeros(m)
        if cfg.continuation:
            corr = np.abs(phi.T @ y)
            scale = float(np.max(corr / thr))
            while scale > 5.0:
                scale /= 5.0
                x, n, _, lip = _apg(y, phi, scale * thr, x, lip, cfg, backtracking)
                total += n
    else:
        x = start
    x, n, converged, lip = _apg(y, phi, thr, x, lip, cfg, backtracking)
    total += n
    # the objective-change test only pins x to ~sqrt(tol); an exact solve on
    # the final sign pattern removes that slack whenever it passes KKT
    cand = _polish(y, phi, thr, x, np.flatnonzero(x))
    if cand is not None and objective(cand) <= objective(x) + 1e-12 * abs(objective(x)):
        x = cand
    info = {"iters": total, "converged": converged}
    return (x, info) if full_output else x


def type1_objective(x, y, phi, preset: PriorPreset, noise_var: float) -> float:
    """``||y - Phi x||^2 / (2 noise_var) + sum_i g(x_i)`` for the preset's penalty g."""
    y, phi = _check_system(y, phi)
    x = np.asarray(x, dtype=float)
    if x.shape != (phi.shape[1],):
        raise DomainError(f"x must have shape ({phi.shape[1]},)")
    r = y - phi @ x
    return 0.5 * float(r @ r) / noise_var + float(np.sum(preset.penalty(x)))


def em_type1(problem, cfg: Type1Config, x0=None) -> Type1Result:
    """Unified Type I EM: E-step weights from the preset, weighted lp M-step.

    ``problem`` is anything with ``phi`` and ``y`` attributes. The Lasso
    preset has constant weights, so exactly one M-step is taken.
    """
    y, phi = _check_system(problem.y, problem.phi)
    m = phi.shape[1]
    preset = cfg.preset
    x = np.zeros(m) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.shape != (m,):
        raise DomainError(f"x0 must have shape ({m},)")

    def eps_of(pr):
        return getattr(pr, "epsilon", None)

    def m_step(w, x_prev, first):
        if preset.p == 1.0:
            start = None if (first and not np.any(x_prev)) else x_prev
            return weighted_l1_step(y, phi, w, cfg.noise_var, cfg.inner, x0=start,
                                    full_output=True)
        return weighted_l2_step(y, phi, w, cfg.noise_var), {"converged": True}

    trace = [type1_objective(x, y, phi, preset, cfg.noise_var)]
    eps_trace = [eps_of(preset)]

    if isinstance(preset, Lasso):
        w = preset.weights(x)
        x, info = m_step(w, x, True)
        trace.append(type1_objective(x, y, phi, preset, cfg.noise_var))
        eps_trace.append(None)
        return Type1Result(x, w, trace, 1, bool(info["converged"]), eps_trace)

    anneal = isinstance(preset, ReweightedL2) and preset.anneal
    converged = False
    w = preset.weights(x)
    k = 0
    for k in range(1, cfg.max_outer_iters + 1):
        w = preset.weights(x)
        x_new, _ = m_step(w, x, k == 1)
        change = float(np.max(np.abs(x_new - x))) / (1.0 + float(np.max(np.abs(x))))
        x = x_new
        trace.append(type1_objective(x, y, phi, preset, cfg.noise_var))
        eps_trace.append(eps_of(preset))
        if anneal and preset.epsilon > EPS_FLOOR:
            if change < math.sqrt(preset.epsilon) / 100.0:
                preset = preset.with_epsilon(max(preset.epsilon / 10.0, EPS_FLOOR))
                # start a new monotone segment under the new penalty
                trace.append(type1_objective(x, y, phi, preset, cfg.noise_var))
                eps_trace.append(preset.epsilon)
            continue
        if change < cfg.outer_tol:
            converged = True
            break
    log.debug("em_type1 %s: %d outer iterations, converged=%s", type(preset).__name__,
              k, converged)
    return Type1Result(x, preset.weights(x), trace, k, converged, eps_trace)


def basis_pursuit(y, phi, factor: float = 5.0, lam_min_ratio: float = 1e-9,
                  support_tol: float = 1e-6, residual_tol: float = 1e-6,
                  inner: InnerSolverConfig | None = None) -> BasisPursuitResult:
    """Approximate ``min ||x||_1 s.t. y = Phi x`` by l1-penalized continuation.

    Solves ``0.5 ||y - Phi x||^2 + lam ||x||_1`` for lam decreasing by
    ``factor`` from ``||Phi^T y||_inf`` to ``lam_min_ratio`` times that,
    warm-starting each stage, then refits least squares on the detected
    support.
    """
    inner = replace(inner or InnerSolverConfig(), lp_warm_start=False)
    y, phi = _check_system(y, phi)
    n, m = phi.shape
    lam0 = float(np.max(np.abs(phi.T @ y))) if m else 0.0
    if lam0 == 0.0:
        return BasisPursuitResult(np.zeros(m), True, float(np.linalg.norm(y)), [])
    ones = np.ones(m)
    x = np.zeros(m)
    lam = lam0
    lambdas = []
    while lam > lam_min_ratio * lam0:
        lam = max(lam / factor, lam_min_ratio * lam0)
        lambdas.append(lam)
        x = weighted_l1_step(y, phi, lam * ones, 1.0, inner, x0=x)

    ynorm = float(np.linalg.norm(y))
    biggest = float(np.max(np.abs(x)))
    support = np.flatnonzero(np.abs(x) > support_tol * biggest)
    if support.size > n:
        support = np.argsort(-np.abs(x), kind="stable")[:n]
    x_db = np.zeros(m)
    x_db[support] = np.linalg.lstsq(phi[:, support], y, rcond=None)[0]
    res_db = float(np.linalg.norm(y - phi @ x_db))
    if res_db <= residual_tol * ynorm:
        return BasisPursuitResult(x_db, True, res_db, lambdas)
    res = float(np.linalg.norm(y - phi @ x))
    return BasisPursuitResult(x, False, res, lambdas)
