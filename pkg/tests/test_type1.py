import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalemix.bench import ProblemSpec, gen_problem, score
from scalemix.checks import trace_violation
from scalemix.errors import DomainError
from scalemix.priors import Lasso, ReweightedL1, ReweightedL2
from scalemix.type1 import (
    InnerSolverConfig, Type1Config, basis_pursuit, em_type1, lipschitz_estimate, soft_threshold,
    type1_objective, weighted_l1_objective, weighted_l1_step, weighted_l2_step,
)


class _P:
    def __init__(self, phi, y):
        self.phi, self.y = phi, y


class TestWeightedL2Step:
    def test_identity(self, rng):
        y = rng.standard_normal(6)
        x = weighted_l2_step(y, np.eye(6), np.ones(6), 1.0)
        np.testing.assert_allclose(x, y / 3.0, rtol=1e-14)

    def test_huge_weights(self, rng):
        phi = rng.standard_normal((10, 20))
        y = rng.standard_normal(10)
        x = weighted_l2_step(y, phi, np.full(20, 1e12), 1.0)
        assert np.max(np.abs(x)) <= 1e-6 * np.linalg.norm(y)

    def test_direct_solve_oracle(self, rng):
        phi = rng.standard_normal((10, 20))
        y = rng.standard_normal(10)
        w = rng.uniform(0.1, 3.0, 20)
        s2 = 0.3
        x = weighted_l2_step(y, phi, w, s2)
        direct = np.linalg.solve(phi.T @ phi / s2 + 2 * np.diag(w), phi.T @ y / s2)
        np.testing.assert_allclose(x, direct, atol=1e-8)
        stat = phi.T @ (phi @ x - y) / s2 + 2 * w * x
        assert np.linalg.norm(stat) <= 1e-8 * np.linalg.norm(phi.T @ y / s2)

    @settings(max_examples=30, deadline=None)
    @given(c=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-3), seed=st.integers(0, 2 ** 32))
    def test_scaling(self, c, seed):
        r = np.random.default_rng(seed)
        phi = r.standard_normal((8, 15))
        y = r.standard_normal(8)
        w = r.uniform(0.1, 2.0, 15)
        np.testing.assert_allclose(weighted_l2_step(c * y, phi, w, 0.5),
                                   c * weighted_l2_step(y, phi, w, 0.5), rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
    def test_bad_weights(self, bad):
        w = np.ones(4)
        w[2] = bad
        with pytest.raises(DomainError):
            weighted_l2_step(np.ones(2), np.ones((2, 4)), w, 1.0)

    def test_bad_noise(self):
        with pytest.raises(DomainError):
            weighted_l2_step(np.ones(2), np.ones((2, 4)), np.ones(4), 0.0)


def _exhaustive_l1_oracle(y, phi, w, noise_var, max_support):
    """Smallest objective over KKT points of every signed support up to ``max_support``."""
    m = phi.shape[1]
    best = weighted_l1_objective(np.zeros(m), y, phi, w, noise_var)
    for size in range(1, max_support + 1):
        for supp in itertools.combinations(range(m), size):
            a = phi[:, supp]
            gram = a.T @ a
            rhs0 = a.T @ y
            for signs in itertools.product((-1.0, 1.0), repeat=size):
                s = np.array(signs)
                xs = np.linalg.solve(gram, rhs0 - noise_var * w[list(supp)] * s)
                x = np.zeros(m)
                x[list(supp)] = xs
                best = min(best, weighted_l1_objective(x, y, phi, w, noise_var))
    return best


class TestWeightedL1Step:
    def test_identity_is_soft_threshold(self, rng):
        y = rng.standard_normal(12) * 2
        x = weighted_l1_step(y, np.eye(12), np.full(12, 0.7), 1.0)
        np.testing.assert_allclose(x, np.sign(y) * np.maximum(np.abs(y) - 0.7, 0), atol=1e-9)

    def test_zero_data(self, rng):
        phi = rng.standard_normal((8, 16))
        x = weighted_l1_step(np.zeros(8), phi, np.ones(16), 1.0)
        np.testing.assert_array_equal(x, 0.0)

    @pytest.mark.parametrize("lp", [True, False])
    def test_exhaustive_sign_oracle(self, lp):
        r = np.random.default_rng(8)
        phi = r.standard_normal((8, 16))
        x_true = np.zeros(16)
        x_true[[3, 11]] = [1.5, -2.0]
        y = phi @ x_true + 0.1 * r.standard_normal(8)
        w = np.ones(16)
        cfg = InnerSolverConfig(lp_warm_start=lp)
        x = weighted_l1_step(y, phi, w, 1.0, cfg)
        nnz = int(np.count_nonzero(np.abs(x) > 1e-9))
        assert nnz <= 4  # solution sits inside the enumerated range
        oracle = _exhaustive_l1_oracle(y, phi, w, 1.0, 4)
        assert weighted_l1_objective(x, y, phi, w, 1.0) <= oracle + 1e-6

    def test_backtracking_matches_fixed_step(self, rng):
        phi = rng.standard_normal((20, 40))
        y = rng.standard_normal(20)
        w = np.full(40, 2.0)
        fixed = weighted_l1_step(y, phi, w, 1.0, InnerSolverConfig(lp_warm_start=False))
        bt = weighted_l1_step(y, phi, w, 1.0, InnerSolverConfig(step_rule="backtracking",
                                                                lp_warm_start=False))
        f1 = weighted_l1_objective(fixed, y, phi, w, 1.0)
        f2 = weighted_l1_objective(bt, y, phi, w, 1.0)
        assert f1 == pytest.approx(f2, rel=1e-8)

    def test_longer_run_does_not_improve(self, rng):
        phi = rng.standard_normal((15, 30))
        y = rng.standard_normal(15)
        w = np.full(30, 0.5)
        cfg = InnerSolverConfig(lp_warm_start=False)
        x, info = weighted_l1_step(y, phi, w, 1.0, cfg, full_output=True)
        assert info["converged"]
        long = weighted_l1_step(y, phi, w, 1.0, InnerSolverConfig(max_iters=200000, tol=1e-14,
                                                                  lp_warm_start=False))
        f, f_long = (weighted_l1_objective(v, y, phi, w, 1.0) for v in (x, long))
        assert f <= f_long + cfg.tol * (1 + abs(f_long))

    def test_iteration_cap_flags_not_converged(self, rng):
        phi = rng.standard_normal((20, 60))
        y = rng.standard_normal(20)
        cfg = InnerSolverConfig(max_iters=3, continuation=False, lp_warm_start=False,
                                polish_every=0)
        _, info = weighted_l1_step(y, phi, np.full(60, 0.01), 1.0, cfg, full_output=True)
        assert not info["converged"]

    def test_bad_weights(self):
        with pytest.raises(DomainError):
            weighted_l1_step(np.ones(2), np.ones((2, 3)), np.array([1.0, 0.0, 1.0]), 1.0)

    def test_soft_threshold(self):
        np.testing.assert_array_equal(soft_threshold(np.array([-3.0, -0.5, 0.2, 2.0]), 1.0),
                                      [-2.0, 0.0, 0.0, 1.0])

    def test_lipschitz_estimate(self, rng):
        phi = rng.standard_normal((30, 60))
        top = np.linalg.norm(phi, 2) ** 2
        est = lipschitz_estimate(phi)
        assert 0.9 * top <= est <= top * (1 + 1e-12)


class TestInnerConfig:
    @pytest.mark.parametrize("kw", [{"max_iters": 0}, {"tol": 0.0}, {"step_rule": "newton"}])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            InnerSolverConfig(**kw)

    @pytest.mark.parametrize("kw", [{"noise_var": 0.0}, {"max_outer_iters": 0},
                                    {"outer_tol": -1.0}])
    def test_outer_invalid(self, kw):
        with pytest.raises(DomainError):
            Type1Config(Lasso(1.0), **kw)


@pytest.fixture(scope="module")
def problem50():
    return gen_problem(ProblemSpec(50, 250, 10, "gaussian", 99))


class TestEmType1:
    def test_lasso_single_step(self, problem50):
        cfg = Type1Config(Lasso(0.3), noise_var=1e-2)
        res = em_type1(problem50, cfg)
        assert res.outer_iters == 1
        direct = weighted_l1_step(problem50.y, problem50.phi, np.full(250, 0.3), 1e-2, cfg.inner)
        np.testing.assert_array_equal(res.x_hat, direct)
        np.testing.assert_array_equal(res.weights, 0.3)

    def test_reweighted_l1_weights(self, problem50):
        eps = 0.1
        pre = ReweightedL1(eps)
        for iters in (1, 2, 3):
            res = em_type1(problem50, Type1Config(pre, max_outer_iters=iters))
            # the weights used at the next iteration, from the same formula
            assert np.array_equal(res.weights, (1 + eps) / (eps + np.abs(res.x_hat)))
            if iters > 1:
                cfg = Type1Config(pre, max_outer_iters=iters - 1)
                prev = em_type1(problem50, cfg)
                step = weighted_l1_step(problem50.y, problem50.phi, prev.weights, cfg.noise_var,
                                        cfg.inner, x0=prev.x_hat)
                np.testing.assert_array_equal(step, res.x_hat)

    def test_reweighted_l2_weights(self, problem50):
        eps = 0.05
        res = em_type1(problem50, Type1Config(ReweightedL2(eps), max_outer_iters=4))
        np.testing.assert_array_equal(res.weights, (eps + 0.5) / (2 * eps + res.x_hat ** 2))

    @pytest.mark.parametrize("preset", [Lasso(1.0), ReweightedL1(0.1), ReweightedL2(0.01),
                                        ReweightedL2(1.0, anneal=True)])
    def test_monotone_trace(self, preset, problem50):
        cfg = Type1Config(preset, max_outer_iters=300 if preset.__dict__.get("anneal") else 30)
        res = em_type1(problem50, cfg)
        assert len(res.weights) == len(res.x_hat) == 250
        assert trace_violation(res.objective_trace, res.epsilon_trace) <= 1e-9

    def test_fixed_point(self, problem50):
        pre = ReweightedL1(0.1)
        res = em_type1(problem50, Type1Config(pre))
        assert res.converged
        one = em_type1(problem50, Type1Config(pre, max_outer_iters=1), x0=res.x_hat)
        np.testing.assert_allclose(one.x_hat, res.x_hat, atol=1e-10)
        # from an exact fixed point every later iterate is identical
        more = em_type1(problem50, Type1Config(pre, max_outer_iters=5), x0=one.x_hat)
        assert more.outer_iters == 1 and more.converged
        np.testing.assert_array_equal(more.x_hat, one.x_hat)
        np.testing.assert_array_equal(more.weights, one.weights)

    def test_reweighted_l1_recovers(self, problem50):
        res = em_type1(problem50, Type1Config(ReweightedL1(0.1)))
        assert score(res.x_hat, problem50.x_gen)[0]

    def test_annealed_schedule(self, problem50):
        res = em_type1(problem50, Type1Config(ReweightedL2(1.0, anneal=True), max_outer_iters=300))
        eps = [e for e in res.epsilon_trace if e is not None]
        assert eps[0] == 1.0
        assert all(b <= a for a, b in zip(eps, eps[1:]))
        assert min(eps) >= 1e-8
        assert score(res.x_hat, problem50.x_gen)[0]

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            em_type1(_P(np.ones((3, 5)), np.ones(4)), Type1Config(Lasso(1.0)))


class TestObjective:
    def test_zero_point(self):
        eps = 0.1
        phi = np.ones((3, 7))
        val = type1_objective(np.zeros(7), np.zeros(3), phi, ReweightedL1(eps), 1.0)
        # penalty normalized as the GT negative log-density: (1 + eps) log(eps + |x|)
        assert val == pytest.approx(7 * (1 + eps) * math.log(eps), rel=1e-14)

    def test_lasso_zero_residual(self, rng):
        y = rng.standard_normal(5)
        assert type1_objective(y, y, np.eye(5), Lasso(2.0), 1.0) == pytest.approx(
            2.0 * np.sum(np.abs(y)), rel=1e-14)

    def test_shape_check(self):
        with pytest.raises(DomainError):
            type1_objective(np.zeros(3), np.zeros(2), np.ones((2, 4)), Lasso(1.0), 1.0)


class TestBasisPursuit:
    def test_zero_data(self, rng):
        res = basis_pursuit(np.zeros(10), rng.standard_normal((10, 20)))
        np.testing.assert_array_equal(res.x_hat, 0.0)
        assert res.converged

    def test_orthonormal(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
        y = rng.standard_normal(12)
        res = basis_pursuit(y, q)
        np.testing.assert_allclose(res.x_hat, q.T @ y, atol=1e-9)
        assert res.residual <= 1e-6 * np.linalg.norm(y)

    def test_one_sparse_recovery(self):
        wins = 0
        for seed in range(50):
            prob = gen_problem(ProblemSpec(20, 50, 1, "gaussian", seed))
            res = basis_pursuit(prob.y, prob.phi)
            wins += score(res.x_hat, prob.x_gen)[0]
        assert wins >= 49

    def test_residual_contract(self, problem50):
        res = basis_pursuit(problem50.y, problem50.phi)
        assert res.converged
        assert res.residual <= 1e-6 * np.linalg.norm(problem50.y)
        lams = res.lambdas
        assert all(b < a for a, b in zip(lams, lams[1:]))
