"""Brute-force verifiers used to cross-check the solver and its theory.

Everything here is deliberately simple: exhaustive enumeration, dense grids
and direct re-runs of the solver with instrumentation.  The routines are
meant for small problems only.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from shapeak import spf as _spf
from shapeak.objective import ObjectiveOracle, Preconditioner, spectral_norm
from shapeak.solver import SolverParams, solve
from shapeak.spf import CustomPenalty, Family, SpfSpec
from shapeak.stationarity import mu_bar_estimate

__all__ = [
    "Claim",
    "VerificationReport",
    "grid_search_prox",
    "brute_force_binary",
    "verify_exact_penalty",
    "grid_local_minima_1d",
    "verify_negative_control",
    "verify_descent",
    "verify_linear_rate",
    "finite_diff_check",
    "MAX_BRUTE_FORCE_N",
]

MAX_BRUTE_FORCE_N = 24
_LOW_BITS = 12
_REFRESH = 256
_TIE_RTOL = 1e-12


class Claim(str, enum.Enum):
    EXACT_PENALTY = "ExactPenalty"
    KKT_BINARY = "KktBinary"
    BRUTE_FORCE_OPTIMUM = "BruteForceOptimum"
    DESCENT_LEMMA = "DescentLemma"
    LINEAR_RATE = "LinearRate"
    GRADIENT_CHECK = "GradientCheck"


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass
class VerificationReport:
    """Outcome of one check.

    ``hypothesis_met`` is false when the inputs fall outside the claim's
    assumptions; ``passed`` then describes what was observed but is not a
    refutation.
    """

    claim: Claim
    passed: bool
    evidence: dict = field(default_factory=dict)
    hypothesis_met: bool = True

    def to_dict(self) -> dict:
        return {"claim": self.claim.value, "passed": bool(self.passed),
                "hypothesis_met": bool(self.hypothesis_met), "evidence": _plain(self.evidence)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _peak(spec: SpfSpec) -> float:
    return 0.5 if spec.family is Family.PSI else spec.omega


def grid_search_prox(spec: SpfSpec, z: float, tau: float, n_points: int = 10**6 + 1,
                     block: int = 1000):
    """Minimize ``(x - z)^2 / (2 tau) + spf(x)`` over a uniform grid of [0, 1].

    The result is the exact grid minimum.  Blocks of ``block`` cells are
    skipped when a lower bound proves they cannot contain it; the bound uses
    only that every SPF is monotone on each side of its peak.

    The SPF peak (branch point) is added to the grid, since a minimum sitting
    exactly on a discontinuity cannot be approached from grid points.

    Returns
    -------
    x : float
        Grid minimizer (smallest such grid point on ties).
    value : float
        Objective at ``x``.
    """
    if n_points < 2 or (n_points - 1) % block:
        raise ValueError("n_points - 1 must be a positive multiple of block")
    m = (n_points - 1) // block
    h = 1.0 / (n_points - 1)
    left_idx = np.arange(m) * block
    xl = left_idx * h
    xr = (left_idx + block) * h
    w = _peak(spec)

    def obj(x):
        return (x - z) ** 2 / (2.0 * tau) + _spf.evaluate(spec, x)

    ends = np.concatenate([xl, xr[-1:]])
    f_ends = obj(ends)
    upper = f_ends.min()
    # lower bound: exact quadratic minimum on the block plus the SPF minimum,
    # which sits at a block end or at the peak
    q_lb = (np.clip(z, xl, xr) - z) ** 2 / (2.0 * tau)
    s_lb = np.minimum(_spf.evaluate(spec, xl), _spf.evaluate(spec, xr))
    has_peak = (xl <= w) & (w <= xr)
    if has_peak.any():
        s_lb = np.where(has_peak, np.minimum(s_lb, _spf.evaluate(spec, w)), s_lb)
    slack = 1e-12 * (1.0 + abs(upper))
    live = np.flatnonzero(q_lb + s_lb <= upper + slack)
    best_x, best_v = None, math.inf
    # the peak itself joins the grid: a branch-point minimum can be isolated
    f_peak = float(obj(w))
    if f_peak <= upper:
        best_x, best_v = float(w), f_peak
    for j in live:
        idx = np.arange(left_idx[j], left_idx[j] + block + 1)
        xs = idx * h
        vals = obj(xs)
        k = int(np.argmin(vals))
        if vals[k] < best_v or (vals[k] == best_v and xs[k] < best_x):
            best_x, best_v = float(xs[k]), float(vals[k])
    return best_x, best_v


# ---------------------------------------------------------------------------
# exhaustive binary search

def _bits(idx, n):
    return ((np.asarray(idx)[..., None] >> np.arange(n)) & 1).astype(float)


def _brute_quadratic(S, q, n):
    """Minimum of ``0.5 x'Sx + q'x`` over {0,1}^n; returns all near-best indices.

    The low bits are enumerated as a block; the high bits follow a Gray code
    whose flips update the coupling terms by one column each.
    """
    S = S.toarray() if hasattr(S, "toarray") else np.asarray(S, dtype=float)
    nl = min(n, _LOW_BITS)
    nh = n - nl
    XL = _bits(np.arange(2**nl), nl)
    SLL, qL = S[:nl, :nl], q[:nl]
    fL = 0.5 * np.einsum("ij,jk,ik->i", XL, SLL, XL) + XL @ qL
    SLH, SHH, qH = S[:nl, nl:], S[nl:, nl:], q[nl:]
    h = np.zeros(nh)
    c = np.zeros(nl)
    u = np.zeros(nh)
    const = 0.0
    best = math.inf
    cands = []
    for t in range(2**nh):
        if t:
            j = (t & -t).bit_length() - 1
            delta = 1.0 - 2.0 * h[j]
            const += delta * (u[j] + qH[j]) + 0.5 * SHH[j, j]
            u += delta * SHH[:, j]
            c += delta * SLH[:, j]
            h[j] += delta
            if t % _REFRESH == 0:
                u = SHH @ h
                c = SLH @ h
                const = 0.5 * h @ u + qH @ h
        vals = fL + XL @ c + const
        m = float(vals.min())
        tol = _TIE_RTOL * (1.0 + abs(min(m, best)))
        if m < best - tol:
            best, cands = m, []
        if m <= best + tol:
            hi = int(sum(1 << (nl + i) for i in range(nh) if h[i]))
            cands.extend(hi + int(i) for i in np.flatnonzero(vals <= best + tol))
            best = min(best, m)
    return cands


def brute_force_binary(oracle: ObjectiveOracle, method: str = "auto"):
    """Global minimizer of ``f`` over {0,1}^n by enumeration.

    Point ``x`` has index ``sum_i x_i 2^i``; among values equal to the
    minimum up to a relative ``1e-12`` the lowest index wins.

    Parameters
    ----------
    method : {"auto", "gray", "naive"}
        ``gray`` needs a quadratic oracle; ``naive`` calls ``oracle.value``
        on every point.

    Returns
    -------
    x : ndarray of int8
    value : float
    """
    n = oracle.n
    if n > MAX_BRUTE_FORCE_N:
        raise ValueError(f"brute force supports n <= {MAX_BRUTE_FORCE_N}, got n={n}")
    quad = oracle.quadratic_form()
    if method == "auto":
        method = "gray" if quad is not None else "naive"
    if method == "gray":
        if quad is None:
            raise ValueError("Gray-code enumeration needs a quadratic oracle")
        cands = _brute_quadratic(quad[0], np.asarray(quad[1], dtype=float), n)
    elif method == "naive":
        cands = range(2**n)
    else:
        raise ValueError(f"unknown method {method!r}")
    # settle near-ties with direct evaluations
    vals = [(oracle.value(_bits(i, n)), i) for i in cands]
    best = min(v for v, _ in vals)
    tol = _TIE_RTOL * (1.0 + abs(best))
    idx = min(i for v, i in vals if v <= best + tol)
    x = _bits(idx, n)
    return x.astype(np.int8), float(oracle.value(x))


# ---------------------------------------------------------------------------
# exact penalty on a grid

def _penalty_values(penalty, x):
    if isinstance(penalty, CustomPenalty):
        return np.asarray(penalty.value(x), dtype=float)
    return np.asarray(_spf.evaluate(penalty, x), dtype=float)


def _grid_objective(oracle, penalty, mu, axes):
    n = len(axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    quad = oracle.quadratic_form()
    if quad is not None:
        S, q = quad
        S = S.toarray() if hasattr(S, "toarray") else np.asarray(S, dtype=float)
        f = 0.5 * np.einsum("ij,jk,ik->i", pts, S, pts) + pts @ np.asarray(q, dtype=float)
    else:
        f = np.array([oracle.value(p) for p in pts])
    pen = sum(_penalty_values(penalty, pts[:, i]) for i in range(n))
    return pts, f + mu * pen


def verify_exact_penalty(oracle: ObjectiveOracle, spec: SpfSpec, mu: float,
                         grid_per_dim: int | None = None) -> VerificationReport:
    """Grid-minimize ``f + mu * spf`` over the box and compare with enumeration.

    Passes when the grid minimizer lies within one grid cell (max-norm) of a
    binary minimizer of ``f``.  The evidence includes a bound on how far the
    true continuous minimum can sit below the grid minimum.
    """
    n = oracle.n
    if n > 3:
        raise ValueError(f"grid verification supports n <= 3, got n={n}")
    if grid_per_dim is None:
        grid_per_dim = 1001 if n <= 2 else 201
    if grid_per_dim < 2:
        raise ValueError("grid_per_dim must be at least 2")
    mb = mu_bar_estimate(oracle, spec)
    h = 1.0 / (grid_per_dim - 1)
    axes = [np.linspace(0.0, 1.0, grid_per_dim)] * n
    pts, F = _grid_objective(oracle, spec, mu, axes)
    k = int(np.argmin(F))
    x_grid = pts[k]
    # binary minimizers of f (all of them, to honour ties)
    verts = _bits(np.arange(2**n), n)
    fv = np.array([oracle.value(v) for v in verts])
    fmin = float(fv.min())
    opt = verts[fv <= fmin + _TIE_RTOL * (1.0 + abs(fmin))]
    dist = float(np.min(np.max(np.abs(opt - x_grid), axis=1)))
    passed = dist <= h * (1.0 + 1e-12)
    # Lipschitz bound of F on the box times the half-diagonal of a cell
    gmax = mb.grad_inf_max * math.sqrt(n)
    slope = _max_spf_slope(spec)
    err = (gmax + mu * slope * math.sqrt(n)) * h * math.sqrt(n) / 2.0
    evidence = {
        "n": n, "mu": float(mu), "mu_bar": mb.value, "mu_bar_certified": mb.certified,
        "grid_per_dim": grid_per_dim, "h": h, "grid_min": float(F[k]),
        "grid_argmin": x_grid, "binary_min": fmin, "binary_argmins": opt,
        "distance": dist, "grid_error_bound": err,
    }
    return VerificationReport(Claim.EXACT_PENALTY, bool(passed), evidence,
                              hypothesis_met=bool(mu > mb.value))


def _max_spf_slope(spec):
    xs = np.linspace(0.0, 1.0, 2001)
    with np.errstate(all="ignore"):
        d = np.abs(np.asarray(_spf.derivative(spec, xs), dtype=float))
    d = d[np.isfinite(d)]
    return float(d.max()) if d.size else math.inf


def grid_local_minima_1d(values) -> np.ndarray:
    """Indices of discrete local minima of a sampled 1-D function.

    Index ``i`` qualifies when no neighbour is strictly smaller.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.empty(0, dtype=int)
    left = np.concatenate([[np.inf], v[:-1]])
    right = np.concatenate([v[1:], [np.inf]])
    return np.flatnonzero((v <= left) & (v <= right))


def verify_negative_control(s: float = 1.5, mus=(1.0, 10.0, 100.0),
                            n_points: int = 200_001) -> VerificationReport:
    """Contrast ``x(1-x)`` with an SPF on ``|x - 1/2|^s / s + mu * penalty``.

    The smooth penalty keeps a local minimizer at 1/2 for every ``mu``; its
    basin has radius ``(s mu)^(-1/(2-s))``, so the grid must be fine enough
    to resolve it.  With ``g(.; 1/2, 1, 1, 2, 2)`` and ``mu > 2^(1-s)``
    every grid local minimizer is binary.
    """
    if not 1.0 < s < 2.0:
        raise ValueError("s must lie in (1, 2)")
    if n_points % 2 == 0:
        raise ValueError("n_points must be odd so that 1/2 is a grid point")
    xs = np.linspace(0.0, 1.0, n_points)
    f = np.abs(xs - 0.5) ** s / s
    spf = SpfSpec.g(0.5, 1.0, 1.0, 2.0, 2.0)
    smooth = CustomPenalty(lambda x: x * (1.0 - x), lambda x: 1.0 - 2.0 * x, "x(1-x)")
    threshold = 2.0 ** (1.0 - s)
    mid = n_points // 2
    rows = []
    ok = True
    for mu in mus:
        lm_smooth = grid_local_minima_1d(f + mu * _penalty_values(smooth, xs))
        lm_spf = grid_local_minima_1d(f + mu * _penalty_values(spf, xs))
        interior_spf = xs[lm_spf[(lm_spf > 0) & (lm_spf < n_points - 1)]]
        radius = (s * mu) ** (-1.0 / (2.0 - s))
        has_half = bool(mid in set(lm_smooth.tolist()))
        spf_binary = interior_spf.size == 0
        ok &= has_half and (spf_binary or mu <= threshold)
        rows.append({"mu": float(mu), "smooth_has_half": has_half, "basin_radius": radius,
                     "spf_local_minima": xs[lm_spf], "spf_only_binary": spf_binary})
    evidence = {"s": s, "n_points": n_points, "h": 1.0 / (n_points - 1),
                "mu_threshold": threshold, "cases": rows}
    return VerificationReport(Claim.KKT_BINARY, bool(ok), evidence,
                              hypothesis_met=all(mu > threshold for mu in mus))


# ---------------------------------------------------------------------------
# solver invariants

def _full_trace(oracle, spec, params, x0):
    rep = solve(oracle, spec, params, x0=x0, record_trace=True)
    ks = [r["k"] for r in rep.trace]
    if ks != list(range(len(ks))):
        raise ValueError("trace was decimated; raise trace_cap")
    return rep


def verify_descent(oracle: ObjectiveOracle, spec: SpfSpec, params: SolverParams, x0=None,
                   atol: float = 1e-9) -> VerificationReport:
    """Check ``Lt[k+1] - Lt[k] <= -(sigma/8) ||x[k+1] - x[k]||^2 + atol`` along a run.

    ``Lt`` is the augmented Lagrangian plus ``(3 sigma / 8) ||x - w||^2``.
    The hypothesis is ``sigma >= 8 max(lambda, beta)`` with ``beta`` the
    spectral norm of the Hessian of a quadratic ``f``.
    """
    quad = oracle.quadratic_form()
    beta = spectral_norm(quad[0]) if quad is not None else oracle.lipschitz_hint
    lam = oracle.lambda_bound
    rep = _full_trace(oracle, spec, params, x0)
    Lt = np.array([r["Ltilde"] for r in rep.trace])
    dx = np.array([r["dx"] for r in rep.trace])
    slack = np.diff(Lt) + params.sigma / 8.0 * dx[1:] ** 2
    worst = float(slack.max()) if slack.size else -math.inf
    k_worst = int(np.argmax(slack)) + 1 if slack.size else None
    met = beta is not None and params.sigma >= 8.0 * max(lam, beta) * (1.0 - 1e-12)
    evidence = {"n": oracle.n, "sigma": params.sigma, "lambda": lam, "beta": beta,
                "mu0": params.mu0, "mu_final": rep.mu_final, "iterations": rep.iterations,
                "worst_slack": worst, "worst_k": k_worst, "atol": atol}
    return VerificationReport(Claim.DESCENT_LEMMA, bool(worst <= atol), evidence,
                              hypothesis_met=bool(met))


def verify_linear_rate(oracle: ObjectiveOracle, spec: SpfSpec, params: SolverParams, x0=None,
                       lam: float | None = None, atol: float = 1e-9,
                       floor: float = 1e-12) -> VerificationReport:
    """Check the contraction of ``||x - w||`` once ``w`` stops changing.

    The run uses the preconditioner ``lam * I`` (default ``sigma / 8``).
    After the last change of ``w`` every ratio
    ``||x[k+1] - w[k+1]|| / ||x[k] - w[k]||`` must stay below
    ``lam / (sigma - lam)`` plus ``atol``.  Residuals under ``floor`` are
    treated as exact zeros and skipped.
    """
    sigma = params.sigma
    lam = sigma / 8.0 if lam is None else float(lam)
    if not 0.0 < lam < sigma / 2.0:
        raise ValueError("lam must lie in (0, sigma / 2)")
    orc = oracle.with_preconditioner(Preconditioner.scaled_identity(lam, oracle.n))
    rep = _full_trace(orc, spec, params, x0)
    dw = np.array([r["dw"] for r in rep.trace])
    res = np.array([r["res_xw"] for r in rep.trace])
    changed = np.flatnonzero(dw > 0.0)
    k_stable = int(changed[-1]) if changed.size else 0
    gamma = lam / (sigma - lam)
    ratios = []
    for k in range(max(k_stable, 1), len(res) - 1):
        if res[k] > floor:
            ratios.append(res[k + 1] / res[k])
    ratios = np.array(ratios)
    worst = float(ratios.max()) if ratios.size else 0.0
    evidence = {"n": oracle.n, "sigma": sigma, "lambda": lam, "gamma": gamma,
                "k_stable": k_stable, "iterations": rep.iterations, "ratios_checked": ratios.size,
                "worst_ratio": worst, "atol": atol, "converged": rep.converged}
    return VerificationReport(Claim.LINEAR_RATE, bool(worst <= gamma + atol), evidence)


# ---------------------------------------------------------------------------
# gradient check

def finite_diff_check(oracle: ObjectiveOracle, points: int = 20, step: float = 1e-6,
                      rtol: float = 1e-4, seed: int = 0) -> VerificationReport:
    """Central differences against ``oracle.gradient`` at random box points.

    A point passes when ``max|fd - grad| <= rtol * max(1, max|grad|)``.
    """
    if not step > 0.0:
        raise ValueError("step must be positive")
    rng = np.random.default_rng(seed)
    n = oracle.n
    worst = 0.0
    for _ in range(points):
        x = rng.random(n)
        g = oracle.gradient(x)
        fd = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = step
            fd[i] = (oracle.value(x + e) - oracle.value(x - e)) / (2.0 * step)
        err = float(np.max(np.abs(fd - g), initial=0.0)) / max(1.0, float(np.max(np.abs(g), initial=0.0)))
        worst = max(worst, err)
    evidence = {"n": n, "points": points, "step": step, "rtol": rtol, "worst_rel_error": worst}
    return VerificationReport(Claim.GRADIENT_CHECK, worst <= rtol, evidence)
