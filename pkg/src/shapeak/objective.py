"""Smooth objectives, their gradients and the x-update preconditioner.

An :class:`ObjectiveOracle` bundles ``f``, ``grad f`` and a
:class:`Preconditioner` ``M`` such that the solver's x-update needs
``(sigma I + M)^{-1} v``.  The factorization of ``sigma I + M`` is cached per
``sigma`` because ``M`` never changes during a run.
"""

from __future__ import annotations

import math
import re
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import special

__all__ = [
    "OracleError",
    "FactorizationError",
    "Preconditioner",
    "ObjectiveOracle",
    "QuadraticOracle",
    "RecoveryOracle",
    "OneBitOracle",
    "FunctionOracle",
    "quadratic_oracle",
    "recovery_oracle",
    "onebit_oracle",
    "zero_oracle",
    "apply_inverse",
    "log_ndtr",
    "neg_log_ndtr",
    "mills_ratio",
    "spectral_norm",
]

#: dimension above which the linear solve switches to conjugate gradients
CG_THRESHOLD = 50_000
CG_RTOL = 1e-10
#: dense systems up to this size are solved through a cached explicit inverse
DENSE_INVERSE_MAX = 4000


class OracleError(ValueError):
    """Invalid objective data."""


class FactorizationError(np.linalg.LinAlgError):
    """``sigma I + M`` could not be factorized."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


# ---------------------------------------------------------------------------
# scalar helpers

def log_ndtr(t):
    """``log Phi(t)`` for the standard normal cdf, stable for large ``|t|``."""
    return special.log_ndtr(t)


def neg_log_ndtr(t):
    return -special.log_ndtr(t)


def mills_ratio(t):
    """``phi(t) / Phi(t)`` without under- or overflow.

    Uses ``Phi(t) = erfcx(-t/sqrt 2) exp(-t^2/2) / 2`` so the Gaussian factor
    cancels analytically.  For very large ``t`` the scaled function overflows
    and the ratio correctly tends to 0.
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return math.sqrt(2.0 / math.pi) / special.erfcx(-t / math.sqrt(2.0))


def spectral_norm(M, tol=1e-10, seed=0) -> float:
    """2-norm of a symmetric PSD matrix (dense, sparse or operator)."""
    if M is None:
        return 0.0
    n = M.shape[0]
    if n == 0:
        return 0.0
    if isinstance(M, np.ndarray) and n <= 2000:
        return float(np.max(np.abs(sla.eigvalsh(M))))
    if n <= 2:
        return float(np.max(np.abs(np.linalg.eigvalsh(np.asarray(_dense(M))))))
    v0 = np.random.default_rng(seed).standard_normal(n)
    val = spla.eigsh(spla.aslinearoperator(M), k=1, which="LM", v0=v0, tol=tol,
                     return_eigenvectors=False)
    return float(abs(val[0]))


def _dense(M):
    if sp.issparse(M):
        return M.toarray()
    if isinstance(M, spla.LinearOperator):
        return M @ np.eye(M.shape[1])
    return np.asarray(M, dtype=float)


def _cho_pivot(err) -> int | None:
    m = re.search(r"(\d+)", str(err))
    return int(m.group(1)) if m else None


# ---------------------------------------------------------------------------
# preconditioner

class Preconditioner:
    """PSD matrix ``M`` used in the x-update, with cached ``(sigma I + M)`` solves.

    Parameters
    ----------
    kind : {"zero", "matrix", "diagonal"}
    matrix : ndarray, sparse matrix or LinearOperator, optional
        Required for ``kind="matrix"``; must be symmetric PSD.
    diag : ndarray, optional
        Required for ``kind="diagonal"``; nonnegative entries.
    n : int, optional
        Dimension, needed for ``kind="zero"``.
    """

    KINDS = ("zero", "matrix", "diagonal")

    def __init__(self, kind="zero", matrix=None, diag=None, n=None):
        if kind not in self.KINDS:
            raise OracleError(f"unknown preconditioner kind {kind!r}")
        self.kind = kind
        self.matrix = None
        self.diag = None
        if kind == "matrix":
            if matrix is None:
                raise OracleError("matrix preconditioner needs a matrix")
            if matrix.shape[0] != matrix.shape[1]:
                raise OracleError(f"preconditioner must be square, got {matrix.shape}")
            if isinstance(matrix, (np.ndarray, list)):
                matrix = np.asarray(matrix, dtype=float)
            elif sp.issparse(matrix):
                matrix = sp.csc_matrix(matrix, dtype=float)
            self.matrix = matrix
            self.n = matrix.shape[0]
        elif kind == "diagonal":
            d = np.asarray(diag, dtype=float).reshape(-1)
            if np.any(d < 0) or not np.all(np.isfinite(d)):
                raise OracleError("diagonal preconditioner needs finite nonnegative entries")
            self.diag = d
            self.n = d.size
        else:
            if n is None:
                raise OracleError("zero preconditioner needs the dimension n")
            self.n = int(n)
        self._cache = {}

    @classmethod
    def zero(cls, n):
        return cls("zero", n=n)

    @classmethod
    def fixed(cls, matrix):
        return cls("matrix", matrix=matrix)

    @classmethod
    def diagonal(cls, d):
        return cls("diagonal", diag=d)

    @classmethod
    def scaled_identity(cls, lam, n):
        return cls("diagonal", diag=np.full(n, float(lam)))

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(v)
        if self.kind == "diagonal":
            return self.diag * v
        return self.matrix @ v

    @cached_property
    def norm(self) -> float:
        """Spectral norm ``||M||``, the bound lambda."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "diagonal":
            return float(self.diag.max()) if self.diag.size else 0.0
        return spectral_norm(self.matrix)

    def factor(self, sigma):
        """Cached factorization of ``sigma I + M`` (no-op for zero/diagonal)."""
        sigma = float(sigma)
        if sigma <= 0.0 or not math.isfinite(sigma):
            raise ValueError(f"sigma must be positive, got {sigma}")
        if self.kind != "matrix":
            return None
        if sigma in self._cache:
            return self._cache[sigma]
        M = self.matrix
        n = self.n
        if isinstance(M, np.ndarray):
            A = M + sigma * np.eye(n)
            try:
                fac = ("chol", sla.cho_factor(A, lower=True, check_finite=True))
            except np.linalg.LinAlgError as err:
                pivot = _cho_pivot(err)
                raise FactorizationError(
                    f"sigma*I + M is not positive definite (leading minor {pivot} fails)",
                    pivot=pivot) from err
            if n <= DENSE_INVERSE_MAX:
                # one explicit inverse turns each later solve into a single matvec
                inv = sla.cho_solve(fac[1], np.eye(n), check_finite=False)
                fac = ("inv", 0.5 * (inv + inv.T))
        elif sp.issparse(M) and n <= CG_THRESHOLD:
            A = (M + sigma * sp.identity(n, format="csc")).tocsc()
            try:
                # symmetric ordering without row pivoting, so U's diagonal holds the pivots
                fac = ("lu", spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                       options={"SymmetricMode": True}))
            except RuntimeError as err:
                raise FactorizationError(f"sparse factorization failed: {err}") from err
            if np.any(fac[1].U.diagonal() <= 0.0):
                k = int(np.flatnonzero(fac[1].U.diagonal() <= 0.0)[0])
                raise FactorizationError(
                    f"sigma*I + M is not positive definite (pivot {k})", pivot=k)
        else:
            op = spla.aslinearoperator(M)
            A = spla.LinearOperator((n, n), matvec=lambda v: op.matvec(v) + sigma * v,
                                    dtype=float)
            fac = ("cg", A)
        self._cache[sigma] = fac
        return fac

    def solve(self, sigma, v):
        """Return ``u`` with ``(sigma I + M) u = v``."""
        v = np.asarray(v, dtype=float)
        if self.kind == "zero":
            self.factor(sigma)
            return v / sigma
        if self.kind == "diagonal":
            self.factor(sigma)
            return v / (sigma + self.diag)
        how, fac = self.factor(sigma)
        if how == "inv":
            return fac @ v
        if how == "chol":
            return sla.cho_solve(fac, v, check_finite=False)
        if how == "lu":
            return fac.solve(v)
        u, info = spla.cg(fac, v, rtol=CG_RTOL, atol=0.0, maxiter=10 * self.n)
        if info != 0:
            raise FactorizationError(f"conjugate gradients did not converge (info={info})")
        return u

    def to_dense(self):
        if self.kind == "zero":
            return np.zeros((self.n, self.n))
        if self.kind == "diagonal":
            return np.diag(self.diag)
        return _dense(self.matrix)


def apply_inverse(precond: Preconditioner, sigma: float, v) -> np.ndarray:
    """``(sigma I + M)^{-1} v`` for the preconditioner ``M``."""
    return precond.solve(sigma, v)


# ---------------------------------------------------------------------------
# oracles

class ObjectiveOracle:
    """Base class: a smooth ``f`` on R^n with gradient and preconditioner.

    Subclasses implement :meth:`value` and :meth:`gradient`; quadratic ones
    also expose :meth:`quadratic_form` so exact thresholds can be computed.
    """

    kind = "generic"

    def __init__(self, n, precond: Preconditioner | None = None, lipschitz_hint=None):
        self.n = int(n)
        self.precond = precond if precond is not None else Preconditioner.zero(self.n)
        if self.precond.n != self.n:
            raise OracleError(f"preconditioner size {self.precond.n} != n={self.n}")
        self._lipschitz_hint = lipschitz_hint

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def value_and_gradient(self, x):
        return self.value(x), self.gradient(x)

    def quadratic_form(self):
        """``(S, q)`` with ``grad f(x) = S x + q``, or ``None``."""
        return None

    @property
    def lambda_bound(self) -> float:
        return self.precond.norm

    @property
    def lipschitz_hint(self):
        return self._lipschitz_hint

    def with_preconditioner(self, precond: Preconditioner):
        """Shallow copy sharing the data but using another preconditioner."""
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.precond = precond
        if precond.n != self.n:
            raise OracleError(f"preconditioner size {precond.n} != n={self.n}")
        return clone

    def _vec(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n:
            raise OracleError(f"expected a vector of length {self.n}, got {x.size}")
        return x


class QuadraticOracle(ObjectiveOracle):
    """``f(x) = 0.5 <x, Q x> + <q, x>``; ``Q`` need not be symmetric."""

    kind = "quadratic"

    def __init__(self, Q, q, precond=None):
        if sp.issparse(Q):
            Q = sp.csr_matrix(Q, dtype=float)
        else:
            Q = np.asarray(Q, dtype=float)
        q = np.asarray(q, dtype=float).reshape(-1)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] != q.size:
            raise OracleError(f"dimension mismatch: Q {Q.shape}, q ({q.size},)")
        n = q.size
        self.Q = Q
        self.q = q
        S = (Q + Q.T) * 0.5
        self.S = S.tocsr() if sp.issparse(S) else S
        super().__init__(n, precond)

    def value(self, x):
        x = self._vec(x)
        return float(0.5 * (x @ (self.Q @ x)) + self.q @ x)

    def gradient(self, x):
        return self.S @ self._vec(x) + self.q

    def value_and_gradient(self, x):
        x = self._vec(x)
        Sx = self.S @ x
        return float(0.5 * (x @ Sx) + self.q @ x), Sx + self.q

    def quadratic_form(self):
        return self.S, self.q

    @property
    def lipschitz_hint(self):
        if self._lipschitz_hint is None:
            self._lipschitz_hint = spectral_norm(self.S)
        return self._lipschitz_hint


class RecoveryOracle(ObjectiveOracle):
    """``f(x) = 0.5 * sum |A x - b|^q`` for ``q > 1``."""

    kind = "recovery"

    def __init__(self, A, b, exponent=2.0, precond=None):
        exponent = float(exponent)
        if not exponent > 1.0:
            raise OracleError(f"exponent must exceed 1, got {exponent}")
        A = sp.csr_matrix(A, dtype=float) if sp.issparse(A) else np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != b.size:
            raise OracleError(f"dimension mismatch: A {A.shape}, b ({b.size},)")
        self.A = A
        self.b = b
        self.exponent = exponent
        super().__init__(A.shape[1], precond)

    def residual(self, x):
        return self.A @ self._vec(x) - self.b

    def value(self, x):
        r = self.residual(x)
        if self.exponent == 2.0:
            return float(0.5 * (r @ r))
        return float(0.5 * np.sum(np.abs(r) ** self.exponent))

    def _grad_from_residual(self, r):
        if self.exponent == 2.0:
            return self.A.T @ r
        e = self.exponent
        return (0.5 * e) * (self.A.T @ (np.abs(r) ** (e - 1.0) * np.sign(r)))

    def gradient(self, x):
        return self._grad_from_residual(self.residual(x))

    def value_and_gradient(self, x):
        r = self.residual(x)
        if self.exponent == 2.0:
            v = float(0.5 * (r @ r))
        else:
            v = float(0.5 * np.sum(np.abs(r) ** self.exponent))
        return v, self._grad_from_residual(r)

    def quadratic_form(self):
        if self.exponent != 2.0:
            return None
        return self.gram, -(self.A.T @ self.b)

    @cached_property
    def gram(self):
        G = self.A.T @ self.A
        return G.tocsc() if sp.issparse(G) else G

    @property
    def lipschitz_hint(self):
        if self._lipschitz_hint is None and self.exponent == 2.0:
            self._lipschitz_hint = self.precond.norm if self.precond.kind == "matrix" \
                else spectral_norm(self.gram)
        return self._lipschitz_hint


class OneBitOracle(ObjectiveOracle):
    """Negative log-likelihood of one-bit measurements in the 0/1 variable.

    With ``z = 2x - 1`` and ``t_i = (y_i / rho) <h_i, z>``,
    ``f(x) = -sum_i log Phi(t_i)``.
    """

    kind = "onebit"

    def __init__(self, H, y, rho, precond=None):
        H = sp.csr_matrix(H, dtype=float) if sp.issparse(H) else np.asarray(H, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        if H.ndim != 2 or H.shape[0] != y.size:
            raise OracleError(f"dimension mismatch: H {H.shape}, y ({y.size},)")
        if not np.all(np.abs(y) == 1.0):
            raise OracleError("y must have entries in {-1, +1}")
        rho = float(rho)
        if not rho > 0.0 or not math.isfinite(rho):
            raise OracleError(f"rho must be positive, got {rho}")
        self.H = H
        self.y = y
        self.rho = rho
        super().__init__(H.shape[1], precond)

    def _t(self, x):
        return (self.y / self.rho) * (self.H @ (2.0 * self._vec(x) - 1.0))

    def value(self, x):
        return float(np.sum(neg_log_ndtr(self._t(x))))

    def gradient(self, x):
        t = self._t(x)
        return (-2.0 / self.rho) * (self.H.T @ (self.y * mills_ratio(t)))

    def value_and_gradient(self, x):
        t = self._t(x)
        return (float(np.sum(neg_log_ndtr(t))),
                (-2.0 / self.rho) * (self.H.T @ (self.y * mills_ratio(t))))

    def hessian_approx(self):
        """``4 H^T diag(y*y) H / rho^2``; ``y*y`` is all ones."""
        yy = self.y * self.y
        if sp.issparse(self.H):
            G = self.H.T @ sp.diags(yy) @ self.H
            return (G * (4.0 / self.rho ** 2)).tocsc()
        return (self.H.T * yy) @ self.H * (4.0 / self.rho ** 2)


class FunctionOracle(ObjectiveOracle):
    """Objective given by plain callables."""

    def __init__(self, n, value, gradient, precond=None, lipschitz_hint=None,
                 quadratic=None):
        self._f = value
        self._g = gradient
        self._quad = quadratic
        super().__init__(n, precond, lipschitz_hint)

    def value(self, x):
        return float(self._f(self._vec(x)))

    def gradient(self, x):
        return np.asarray(self._g(self._vec(x)), dtype=float).reshape(-1)

    def quadratic_form(self):
        return self._quad


# ---------------------------------------------------------------------------
# constructors

def quadratic_oracle(Q, q, precond="zero") -> QuadraticOracle:
    """Quadratic objective ``0.5 <x, Qx> + <q, x>``.

    ``precond`` is ``"zero"``, ``"matrix"`` (the symmetrized ``Q``, which must
    then be PSD) or a :class:`Preconditioner`.
    """
    oracle = QuadraticOracle(Q, q)
    if isinstance(precond, Preconditioner):
        return oracle.with_preconditioner(precond)
    if precond == "matrix":
        oracle.precond = Preconditioner.fixed(oracle.S)
    elif precond != "zero":
        raise OracleError(f"unknown preconditioner {precond!r}")
    return oracle


def recovery_oracle(A, b, exponent=2.0, precond="gram", x0=None, lam_cap=None) -> RecoveryOracle:
    """Residual-power objective ``0.5 * ||Ax - b||_q^q``.

    Parameters
    ----------
    precond : {"gram", "diagonal", "zero"} or Preconditioner
        ``"gram"`` fixes ``M = A^T A`` whatever the exponent.  ``"diagonal"``
        uses ``diag(A^T A) * q (q-1) max|r|^(q-2)`` with ``r`` the residual at ``x0``, clipped to
        ``lam_cap`` when given.
    """
    oracle = RecoveryOracle(A, b, exponent)
    if isinstance(precond, Preconditioner):
        return oracle.with_preconditioner(precond)
    if precond == "gram":
        oracle.precond = Preconditioner.fixed(oracle.gram)
    elif precond == "diagonal":
        x0 = np.zeros(oracle.n) if x0 is None else x0
        r = oracle.residual(x0)
        e = oracle.exponent
        if sp.issparse(oracle.A):
            d = np.asarray(oracle.A.multiply(oracle.A).sum(axis=0)).ravel()
        else:
            d = np.einsum("ij,ij->j", oracle.A, oracle.A)
        rmax = float(np.max(np.abs(r))) if r.size else 0.0
        # unit residual scale when x0 already fits the data
        scale = e * (e - 1.0) * (rmax ** (e - 2.0) if rmax > 0 else 1.0)
        d = d * scale
        if lam_cap is not None:
            d = np.minimum(d, float(lam_cap))
        oracle.precond = Preconditioner.diagonal(d)
    elif precond != "zero":
        raise OracleError(f"unknown preconditioner {precond!r}")
    return oracle


def onebit_oracle(H, y, rho, precond="hessian") -> OneBitOracle:
    """One-bit maximum-likelihood objective; ``precond`` is ``"hessian"`` or ``"zero"``."""
    oracle = OneBitOracle(H, y, rho)
    if isinstance(precond, Preconditioner):
        return oracle.with_preconditioner(precond)
    if precond == "hessian":
        oracle.precond = Preconditioner.fixed(oracle.hessian_approx())
    elif precond != "zero":
        raise OracleError(f"unknown preconditioner {precond!r}")
    return oracle


def zero_oracle(n) -> FunctionOracle:
    """``f = 0``."""
    return FunctionOracle(n, lambda x: 0.0, lambda x: np.zeros(n), lipschitz_hint=0.0,
                          quadratic=(np.zeros((n, n)), np.zeros(n)))
