import itertools
import json

import numpy as np
import pytest

from shapeak.objective import FunctionOracle, quadratic_oracle, recovery_oracle
from shapeak.oracle import (MAX_BRUTE_FORCE_N, Claim, VerificationReport, brute_force_binary,
                            finite_diff_check, grid_local_minima_1d, grid_search_prox,
                            verify_descent, verify_exact_penalty, verify_linear_rate,
                            verify_negative_control)
from shapeak.solver import SolverParams
from shapeak.spf import SpfSpec, evaluate
from shapeak.stationarity import mu_bar


def enumerate_min(f, n):
    best = None
    for bits in itertools.product([0.0, 1.0], repeat=n):
        v = f.value(np.array(bits))
        if best is None or v < best[1]:
            best = (bits, v)
    return best


class TestBruteForce:
    def test_two_variable(self, pair_problem):
        _, f, _ = pair_problem
        for method in ("auto", "gray", "naive"):
            x, v = brute_force_binary(f, method)
            assert list(x) == [1, 1] and v == -2.5

    @pytest.mark.parametrize("n", [1, 5, 12, 14])
    def test_gray_matches_itertools(self, n, rng):
        Q = rng.normal(size=(n, n))
        f = quadratic_oracle(Q, rng.normal(size=n))
        x, v = brute_force_binary(f, "gray")
        bits, ref = enumerate_min(f, n) if n <= 12 else (None, brute_force_binary(f, "naive")[1])
        assert v == pytest.approx(ref, abs=1e-9)
        assert f.value(x) == pytest.approx(v, abs=1e-9)

    def test_non_quadratic(self, rng):
        A, b = rng.normal(size=(8, 6)), rng.normal(size=8)
        f = recovery_oracle(A, b, 1.5)
        x, v = brute_force_binary(f)
        assert v == pytest.approx(enumerate_min(f, 6)[1])

    def test_ties_pick_lowest_index(self):
        # f = 0 everywhere: index 0 (all zeros) wins
        x, v = brute_force_binary(quadratic_oracle(np.zeros((3, 3)), np.zeros(3)))
        assert not x.any() and v == 0.0

    def test_tie_between_two_vertices(self):
        # f(1,0) = f(0,1) = -1, f(1,1) = 0: index of (1,0) is 1 < 2
        f = quadratic_oracle(np.array([[0.0, 2.0], [0.0, 0.0]]), np.array([-1.0, -1.0]))
        x, _ = brute_force_binary(f)
        assert list(x) == [1, 0]

    def test_size_limit(self):
        f = quadratic_oracle(np.zeros((MAX_BRUTE_FORCE_N + 1,) * 2), np.zeros(MAX_BRUTE_FORCE_N + 1))
        with pytest.raises(ValueError):
            brute_force_binary(f)

    def test_gray_needs_quadratic(self):
        f = FunctionOracle(2, lambda x: 0.0, lambda x: np.zeros(2))
        with pytest.raises(ValueError):
            brute_force_binary(f, "gray")


class TestGridSearchProx:
    def test_exact_grid_minimum(self, default_spec):
        n = 10**4 + 1
        xs = np.linspace(0, 1, n)
        for z, tau in [(0.3, 0.05), (0.9, 0.2), (-0.5, 1.0)]:
            vals = (xs - z) ** 2 / (2 * tau) + evaluate(default_spec, xs)
            x, v = grid_search_prox(default_spec, z, tau, n_points=n, block=100)
            assert v <= vals.min()
            assert v == pytest.approx(vals.min(), abs=1e-12) or x == default_spec.omega

    def test_peak_is_a_candidate(self):
        # with z far right of an off-grid peak, the prox minimum sits on the peak
        spec = SpfSpec.g(1 / 3, 1, 1, 1, 1)
        x, _ = grid_search_prox(spec, 0.35, 1e-3, n_points=1001, block=10)
        assert x == pytest.approx(1 / 3, abs=1e-3)

    def test_block_check(self, default_spec):
        with pytest.raises(ValueError):
            grid_search_prox(default_spec, 0.1, 0.1, n_points=1000, block=7)


class TestExactPenalty:
    def test_two_variable(self, pair_problem):
        _, f, spec = pair_problem
        rep = verify_exact_penalty(f, spec, 1.5 * mu_bar(f, spec))
        assert rep.passed and rep.hypothesis_met
        assert list(rep.evidence["grid_argmin"]) == [1.0, 1.0]

    def test_random_planar_quadratics(self, rng, default_spec):
        for _ in range(5):
            f = quadratic_oracle(rng.normal(size=(2, 2)) * 3, rng.normal(size=2) * 3)
            rep = verify_exact_penalty(f, default_spec, 1.5 * mu_bar(f, default_spec), 201)
            assert rep.passed

    def test_three_dimensions(self, rng, default_spec):
        f = quadratic_oracle(rng.normal(size=(3, 3)), rng.normal(size=3))
        assert verify_exact_penalty(f, default_spec, 1.5 * mu_bar(f, default_spec), 41).passed

    def test_weak_penalty_has_interior_minimizer(self, default_spec):
        # f = 2 (x - 1/2)^2 has its minimum inside; a tiny mu cannot move it
        f = quadratic_oracle(np.array([[4.0]]), np.array([-2.0]))
        rep = verify_exact_penalty(f, default_spec, 1e-3)
        assert not rep.passed and not rep.hypothesis_met

    def test_dimension_guard(self, default_spec):
        with pytest.raises(ValueError):
            verify_exact_penalty(quadratic_oracle(np.eye(4), np.zeros(4)), default_spec, 1.0)


class TestNegativeControl:
    def test_default(self):
        rep = verify_negative_control()
        assert rep.passed and rep.hypothesis_met
        assert all(c["smooth_has_half"] and c["spf_only_binary"] for c in rep.evidence["cases"])

    def test_coarse_grid_misses_the_basin(self):
        # at mu=100 the basin radius is about 4.4e-5, invisible on a 1001-point grid
        rep = verify_negative_control(mus=(100.0,), n_points=1001)
        assert not rep.passed

    def test_local_minima_helper(self):
        np.testing.assert_array_equal(grid_local_minima_1d([3, 1, 2, 2, 0]), [1, 4])
        assert grid_local_minima_1d([]).size == 0

    def test_argument_checks(self):
        with pytest.raises(ValueError):
            verify_negative_control(s=2.0)
        with pytest.raises(ValueError):
            verify_negative_control(n_points=1000)


def convex_quadratic(rng, n=8):
    B = rng.normal(size=(n, n))
    return quadratic_oracle(B.T @ B / n, 2 * rng.normal(size=n), precond="matrix")


class TestSolverInvariants:
    def test_descent(self, rng, default_spec):
        f = convex_quadratic(rng)
        sigma = 8 * f.lambda_bound
        params = SolverParams(mu0=0.05 * mu_bar(f, default_spec), sigma=sigma, k0=5,
                              eps_stop=1e-8, max_iter=300)
        rep = verify_descent(f, default_spec, params)
        assert rep.passed and rep.hypothesis_met

    def test_descent_hypothesis_flag(self, rng, default_spec):
        f = convex_quadratic(rng)
        params = SolverParams(mu0=1.0, sigma=0.5 * f.lambda_bound, max_iter=20)
        assert not verify_descent(f, default_spec, params).hypothesis_met

    def test_linear_rate(self, rng, default_spec):
        f = convex_quadratic(rng)
        sigma = 8 * f.lambda_bound
        params = SolverParams(mu0=0.05 * mu_bar(f, default_spec), sigma=sigma, k0=5,
                              eps_stop=1e-10, max_iter=2000)
        rep = verify_linear_rate(f, default_spec, params)
        assert rep.passed
        assert rep.evidence["gamma"] == pytest.approx(1 / 7)

    def test_linear_rate_lambda_guard(self, default_spec, rng):
        with pytest.raises(ValueError):
            verify_linear_rate(convex_quadratic(rng), default_spec,
                               SolverParams(mu0=1.0, sigma=1.0), lam=0.6)

    def test_decimated_trace_rejected(self, rng, default_spec):
        f = convex_quadratic(rng)
        params = SolverParams(mu0=1e-4, sigma=8 * f.lambda_bound, max_iter=50, trace_cap=4,
                              eps_stop=1e-12)
        with pytest.raises(ValueError):
            verify_descent(f, default_spec, params)


class TestFiniteDiff:
    def test_correct_gradient(self, rng):
        assert finite_diff_check(quadratic_oracle(rng.normal(size=(4, 4)), np.ones(4))).passed

    def test_wrong_gradient(self):
        f = FunctionOracle(2, lambda x: float(x @ x), lambda x: x)
        rep = finite_diff_check(f)
        assert not rep.passed and rep.claim is Claim.GRADIENT_CHECK


class TestReport:
    def test_json(self, pair_problem):
        _, f, spec = pair_problem
        rep = verify_exact_penalty(f, spec, 4.0, 11)
        d = json.loads(rep.to_json())
        assert d["claim"] == "ExactPenalty" and d["passed"] is True
        assert d["evidence"]["grid_argmin"] == [1.0, 1.0]

    def test_plain_types(self):
        rep = VerificationReport(Claim.LINEAR_RATE, np.bool_(True),
                                 {"a": np.float64(1.5), "b": np.arange(2), "c": np.int64(3)})
        assert json.loads(rep.to_json())["evidence"] == {"a": 1.5, "b": [0, 1], "c": 3}
