import mpmath
import numpy as np
import pytest
import scipy.sparse as sp

from shapeak.objective import (FactorizationError, OracleError, Preconditioner, apply_inverse,
                               mills_ratio, neg_log_ndtr, onebit_oracle, quadratic_oracle,
                               recovery_oracle, spectral_norm, zero_oracle)
from shapeak.oracle import finite_diff_check


def central_diff(f, x, h=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def assert_gradient(oracle, rng, points=100, h=1e-5, rtol=1e-4):
    for _ in range(points):
        x = rng.uniform(0, 1, oracle.n)
        fd = central_diff(oracle.value, x, h)
        g = oracle.gradient(x)
        assert np.linalg.norm(g - fd) <= rtol * max(1.0, np.linalg.norm(fd))


def neg_log_phi_reference(t):
    return float(-mpmath.log(mpmath.ncdf(mpmath.mpf(t))))


class TestQuadraticOracle:
    Q = [[1.0, -1.0], [-2.0, 0.0]]
    q = [-2.0, 0.5]

    def test_value_at_ones(self):
        assert quadratic_oracle(self.Q, self.q).value([1, 1]) == pytest.approx(-2.5, abs=1e-15)

    def test_value_at_zero(self):
        assert quadratic_oracle(self.Q, self.q).value([0, 0]) == 0.0

    def test_gradient_uses_symmetric_part(self):
        np.testing.assert_allclose(quadratic_oracle(self.Q, self.q).gradient([1, 1]), [-2.5, -1.0])

    def test_enumerated_values(self):
        f = quadratic_oracle(self.Q, self.q)
        vals = {x: f.value(x) for x in [(0, 0), (1, 0), (0, 1), (1, 1)]}
        assert vals == pytest.approx({(0, 0): 0.0, (1, 0): -1.5, (0, 1): 0.5, (1, 1): -2.5})

    def test_finite_differences(self, rng):
        Q = rng.normal(size=(6, 6))
        assert_gradient(quadratic_oracle(Q, rng.normal(size=6)), rng)

    def test_sparse_matches_dense(self, rng):
        Q = rng.normal(size=(8, 8)) * (rng.uniform(size=(8, 8)) < 0.4)
        q = rng.normal(size=8)
        x = rng.uniform(size=8)
        dense, sparse = quadratic_oracle(Q, q), quadratic_oracle(sp.csr_matrix(Q), q)
        assert sparse.value(x) == pytest.approx(dense.value(x), rel=1e-13)
        np.testing.assert_allclose(sparse.gradient(x), dense.gradient(x), rtol=1e-13)

    def test_dimension_mismatch(self):
        with pytest.raises(OracleError):
            quadratic_oracle(np.eye(3), np.zeros(2))
        with pytest.raises(OracleError):
            quadratic_oracle(np.eye(2), np.zeros(2)).value(np.zeros(3))

    def test_matrix_preconditioner(self, rng):
        B = rng.normal(size=(5, 5))
        f = quadratic_oracle(B.T @ B, np.zeros(5), precond="matrix")
        assert f.lambda_bound == pytest.approx(np.linalg.norm(B.T @ B, 2), rel=1e-8)

    def test_zero_oracle(self):
        f = zero_oracle(3)
        assert f.value(np.ones(3)) == 0.0
        assert not f.gradient(np.ones(3)).any()


class TestRecoveryOracle:
    def test_zero_residual(self, rng):
        A = rng.normal(size=(7, 4))
        x = rng.uniform(size=4)
        f = recovery_oracle(A, A @ x, 1.5)
        assert f.value(x) == 0.0
        assert not f.gradient(x).any()

    def test_least_squares_identity(self, rng):
        A, b = rng.normal(size=(9, 5)), rng.normal(size=9)
        f = recovery_oracle(A, b, 2.0)
        x = rng.uniform(size=5)
        assert f.value(x) == pytest.approx(0.5 * np.sum((A @ x - b) ** 2), rel=1e-13)
        np.testing.assert_allclose(f.gradient(x), A.T @ (A @ x - b), rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("q", [1.2, 1.5, 3.0])
    def test_finite_differences(self, q, rng):
        A, b = rng.normal(size=(12, 6)), rng.normal(size=12)
        assert_gradient(recovery_oracle(A, b, q), rng)

    def test_gram_preconditioner(self, rng):
        A = rng.normal(size=(10, 4))
        f = recovery_oracle(A, np.zeros(10))
        np.testing.assert_allclose(f.precond.to_dense(), A.T @ A, rtol=1e-13)

    def test_diagonal_preconditioner_capped(self, rng):
        A, b = rng.normal(size=(10, 4)), rng.normal(size=10)
        f = recovery_oracle(A, b, 3.0, precond="diagonal", lam_cap=0.5)
        assert f.precond.kind == "diagonal"
        assert f.lambda_bound <= 0.5

    def test_rejects_exponent_at_most_one(self, rng):
        with pytest.raises(OracleError):
            recovery_oracle(rng.normal(size=(3, 2)), np.zeros(3), 1.0)


class TestOneBitOracle:
    def test_log_phi_at_zero(self):
        assert neg_log_ndtr(0.0) == pytest.approx(np.log(2), abs=1e-15)

    @pytest.mark.parametrize("t", [-10.0, -38.0, -40.0, -200.0, 3.0])
    def test_log_phi_against_mpmath(self, t):
        assert neg_log_ndtr(t) == pytest.approx(neg_log_phi_reference(t), rel=1e-12)

    def test_log_phi_minus_ten(self):
        assert neg_log_ndtr(-10.0) == pytest.approx(53.231, abs=5e-4)

    @pytest.mark.parametrize("t", [-60.0, -40.0, -5.0, 0.0, 5.0, 40.0, 60.0])
    def test_mills_ratio(self, t):
        ref = mpmath.npdf(t) / mpmath.ncdf(t)
        assert mills_ratio(t) == pytest.approx(float(ref), rel=1e-10, abs=1e-300)

    def test_value_single_term(self):
        H = np.array([[1.0, -2.0]])
        f = onebit_oracle(H, np.array([1.0]), rho=0.5)
        # z = 2x - 1 = (1, 1): t = (1/0.5)(1 - 2) = -2
        assert f.value([1, 1]) == pytest.approx(neg_log_phi_reference(-2.0), rel=1e-13)

    def test_finite_differences(self, rng):
        H = rng.normal(size=(30, 6))
        y = np.where(rng.uniform(size=30) < 0.5, -1.0, 1.0)
        assert_gradient(onebit_oracle(H, y, 0.7), rng, points=50)

    def test_finite_on_extreme_arguments(self):
        H = np.array([[100.0], [-100.0]])
        f = onebit_oracle(H, np.array([1.0, 1.0]), rho=0.01)
        for x in ([0.0], [1.0], [0.5]):
            assert np.isfinite(f.value(x))
            assert np.all(np.isfinite(f.gradient(x)))

    def test_preconditioner_formula(self, rng):
        H = rng.normal(size=(8, 3))
        y = np.where(rng.uniform(size=8) < 0.5, -1.0, 1.0)
        f = onebit_oracle(H, y, 2.0)
        np.testing.assert_allclose(f.precond.to_dense(), 4 * H.T @ H / 4.0, rtol=1e-13)

    @pytest.mark.parametrize("y", [[1.0, 0.0], [1.0, 2.0]])
    def test_rejects_bad_labels(self, y):
        with pytest.raises(OracleError):
            onebit_oracle(np.ones((2, 2)), np.array(y), 1.0)

    def test_rejects_bad_rho(self):
        with pytest.raises(OracleError):
            onebit_oracle(np.ones((1, 1)), np.ones(1), 0.0)

    def test_gradient_check_helper(self, rng):
        H = rng.normal(size=(20, 5))
        y = np.sign(H @ rng.normal(size=5))
        assert finite_diff_check(onebit_oracle(H, y, 1.0)).passed


class TestApplyInverse:
    def test_zero_kind(self):
        np.testing.assert_allclose(apply_inverse(Preconditioner.zero(2), 2.0, [0.4, -0.2]),
                                   [0.2, -0.1])

    def test_identity(self):
        np.testing.assert_allclose(apply_inverse(Preconditioner.fixed(np.eye(2)), 1.0, [2, 4]),
                                   [1.0, 2.0])

    @pytest.mark.parametrize("n", [5, 60, 300])
    def test_dense_residual(self, n, rng):
        B = rng.normal(size=(n, n))
        M = B.T @ B
        v = rng.normal(size=n)
        u = apply_inverse(Preconditioner.fixed(M), 0.3, v)
        assert np.linalg.norm(0.3 * u + M @ u - v) <= 1e-10 * np.linalg.norm(v)

    def test_sparse_residual(self, rng):
        B = sp.random(200, 200, density=0.02, random_state=1)
        M = (B.T @ B).tocsc()
        v = rng.normal(size=200)
        u = apply_inverse(Preconditioner.fixed(M), 0.5, v)
        assert np.linalg.norm(0.5 * u + M @ u - v) <= 1e-10 * np.linalg.norm(v)

    def test_diagonal(self):
        u = apply_inverse(Preconditioner.diagonal([1.0, 3.0]), 1.0, [2.0, 8.0])
        np.testing.assert_allclose(u, [1.0, 2.0])

    def test_linear(self, rng):
        B = rng.normal(size=(20, 20))
        P = Preconditioner.fixed(B.T @ B)
        v, w = rng.normal(size=20), rng.normal(size=20)
        lhs = apply_inverse(P, 0.7, 2.0 * v - 3.0 * w)
        rhs = 2.0 * apply_inverse(P, 0.7, v) - 3.0 * apply_inverse(P, 0.7, w)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_indefinite_matrix_rejected(self):
        with pytest.raises(FactorizationError):
            apply_inverse(Preconditioner.fixed(np.diag([1.0, -5.0])), 1.0, [1.0, 1.0])

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            apply_inverse(Preconditioner.zero(1), 0.0, [1.0])

    def test_spectral_norm_power_iteration(self, rng):
        B = rng.normal(size=(40, 40))
        M = B.T @ B
        assert spectral_norm(M) == pytest.approx(np.linalg.eigvalsh(M)[-1], rel=1e-2)

    def test_unknown_kind(self):
        with pytest.raises(OracleError):
            Preconditioner("cholesky")
