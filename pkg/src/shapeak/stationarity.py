"""Optimality certificates for the box-constrained penalty model.

``F(x; mu) = f(x) + mu * sum_i spf(x_i)`` over ``[0, 1]^n``.

* :func:`kkt_residual` measures the signed first-order conditions.
* :func:`is_p_stationary` checks the fixed-point condition of the
  proximal-gradient map ``x -> prox_{tau mu spf}(x - tau grad f(x))``.
* :func:`mu_bar` returns the penalty threshold
  ``max_{x in box} ||grad f(x)||_inf / c`` above which every KKT point is
  binary.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import qmc

from shapeak import spf as _spf
from shapeak.objective import ObjectiveOracle
from shapeak.prox import prox_vector_full
from shapeak.spf import SpfSpec

__all__ = [
    "CertificateKind",
    "Certificate",
    "MuBarEstimate",
    "kkt_residual",
    "is_p_stationary",
    "box_gradient_range",
    "mu_bar",
    "mu_bar_estimate",
]

DEFAULT_TOL = 1e-8
_MU_BAR_SAMPLES = 2**17


class CertificateKind(str, enum.Enum):
    KKT = "KKT"
    P_STATIONARY = "PStationary"


@dataclass(frozen=True)
class Certificate:
    """Outcome of a stationarity check.

    ``satisfied`` holds exactly when ``worst_violation <= tolerance``;
    ``witness_index`` is the component attaining the worst violation.
    """

    kind: CertificateKind
    satisfied: bool
    worst_violation: float
    witness_index: int | None
    tolerance: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def _box_point(x, n):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n:
        raise ValueError(f"expected a vector of length {n}, got {x.size}")
    if not np.all((x >= 0.0) & (x <= 1.0)):
        raise ValueError("x must lie in [0, 1]^n")
    return x


def _check_mu(mu):
    mu = float(mu)
    if not (mu > 0.0 and math.isfinite(mu)):
        raise ValueError(f"mu must be positive and finite, got {mu}")
    return mu


def _certificate(kind, viol, tol):
    if viol.size == 0:
        return Certificate(kind, True, 0.0, None, float(tol))
    i = int(np.argmax(viol))
    worst = float(viol[i])
    return Certificate(kind, worst <= tol, worst, i if worst > 0.0 else None, float(tol))


def _component_violation(xi, gi, mu, intervals):
    """KKT violation of one component given the SPF subgradient intervals."""
    if not intervals:
        return math.inf
    if xi == 0.0:
        # need g + mu * nu >= 0 for some nu: use the largest subgradient
        top = max(hi for _, hi in intervals)
        return max(0.0, -(gi + mu * top))
    if xi == 1.0:
        bottom = min(lo for lo, _ in intervals)
        return max(0.0, gi + mu * bottom)
    best = math.inf
    for lo, hi in intervals:
        # distance from -g to mu * [lo, hi]
        t = -gi
        best = min(best, max(mu * lo - t, 0.0, t - mu * hi))
    return best


def kkt_residual(x, oracle: ObjectiveOracle, spec: SpfSpec, mu: float,
                 tol: float = DEFAULT_TOL) -> Certificate:
    """Worst violation of the signed KKT conditions at ``x``.

    Component ``i`` needs some ``nu`` in the SPF subdifferential at ``x_i``
    with ``grad_i f + mu nu`` nonnegative at 0, zero inside and nonpositive
    at 1.  The violation is the smallest distance to that condition over
    the subdifferential.
    """
    mu = _check_mu(mu)
    x = _box_point(x, oracle.n)
    g = oracle.gradient(x)
    viol = np.empty(x.size)
    cache = {}
    for i, (xi, gi) in enumerate(zip(x, g)):
        xi = float(xi)
        if xi not in cache:
            cache[xi] = _spf.subdifferential(spec, xi)
        viol[i] = _component_violation(xi, float(gi), mu, cache[xi])
    return _certificate(CertificateKind.KKT, viol, tol)


def is_p_stationary(x, oracle: ObjectiveOracle, spec: SpfSpec, mu: float, tau: float,
                    tol: float = DEFAULT_TOL) -> Certificate:
    """Check ``x in prox_{tau mu spf}(x - tau grad f(x))`` componentwise.

    Where the prox has two minimizers, ``x_i`` passes if it matches either.
    The algorithm's natural step is ``tau = 1 / sigma``.
    """
    mu = _check_mu(mu)
    tau = float(tau)
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ValueError(f"tau must be positive and finite, got {tau}")
    x = _box_point(x, oracle.n)
    z = x - tau * oracle.gradient(x)
    chosen, alternate, _ = prox_vector_full(spec, z, tau * mu)
    viol = np.minimum(np.abs(x - chosen), np.abs(x - alternate))
    return _certificate(CertificateKind.P_STATIONARY, viol, tol)


# ---------------------------------------------------------------------------
# penalty threshold

@dataclass(frozen=True)
class MuBarEstimate:
    """Penalty threshold with its provenance.

    ``certified`` is true when ``value`` is the exact box maximum (quadratic
    objectives); sampled values are lower bounds.
    """

    value: float
    grad_inf_max: float
    c: float
    certified: bool
    method: str
    samples: int = 0


def box_gradient_range(S, q):
    """Exact range of each component of ``S x + q`` over ``[0, 1]^n``.

    Returns ``(lo, hi)`` with ``lo_i = q_i + sum_j min(S_ij, 0)`` and
    ``hi_i = q_i + sum_j max(S_ij, 0)``.
    """
    q = np.asarray(q, dtype=float).reshape(-1)
    if sp.issparse(S):
        S = sp.csr_matrix(S)
        pos = np.asarray(S.maximum(0).sum(axis=1)).ravel()
        neg = np.asarray(S.minimum(0).sum(axis=1)).ravel()
    else:
        S = np.asarray(S, dtype=float)
        pos = np.clip(S, 0.0, None).sum(axis=1)
        neg = np.clip(S, None, 0.0).sum(axis=1)
    return q + neg, q + pos


def mu_bar_estimate(oracle: ObjectiveOracle, spec: SpfSpec, n_samples: int = _MU_BAR_SAMPLES,
                    seed: int = 0) -> MuBarEstimate:
    """Penalty threshold ``max_box ||grad f||_inf / c``.

    Quadratic oracles get the exact value by interval arithmetic.  Others
    are sampled on a scrambled Sobol sequence plus the two constant
    vertices; the result is a lower bound and flagged as not certified.
    """
    c = _spf.subgradient_bound(spec)
    quad = oracle.quadratic_form()
    if quad is not None:
        lo, hi = box_gradient_range(*quad)
        gmax = float(max(np.abs(lo).max(initial=0.0), np.abs(hi).max(initial=0.0)))
        return MuBarEstimate(gmax / c, gmax, c, True, "interval")
    n = oracle.n
    pts = [np.zeros(n), np.ones(n)]
    if n_samples > 0:
        m = max(0, math.ceil(math.log2(n_samples)))
        sob = qmc.Sobol(d=n, scramble=True, seed=seed).random_base2(m)
        pts.extend(sob)
    gmax = 0.0
    for p in pts:
        gmax = max(gmax, float(np.max(np.abs(oracle.gradient(p)), initial=0.0)))
    return MuBarEstimate(gmax / c, gmax, c, False, "sobol", len(pts))


def mu_bar(oracle: ObjectiveOracle, spec: SpfSpec, n_samples: int = _MU_BAR_SAMPLES,
           seed: int = 0) -> float:
    """Value of :func:`mu_bar_estimate`."""
    return mu_bar_estimate(oracle, spec, n_samples, seed).value
