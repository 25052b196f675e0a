"""Box-restricted proximal operator of a sharp-peak function.

``prox_1d(spec, z, tau)`` returns the minimizers over ``[0, 1]`` of

    (x - z)^2 / (2 tau) + spf(x).

Every candidate minimizer is enumerated explicitly (box ends, the branch
point and the stationary points of each smooth piece) and compared by
objective value, so the routine is exact up to the accuracy of the
stationary-point solve.  For exponents in {1, 2} the stationary points are
closed-form; otherwise they come from a safeguarded Newton iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from shapeak import spf as _spf
from shapeak.spf import Family, SpfSpec

__all__ = ["ProxResult1D", "prox_1d", "prox_vector", "prox_vector_full", "prox_objective",
           "TIE_RTOL"]

#: relative tolerance under which two candidate objective values count as a tie
TIE_RTOL = 1e-13
#: candidates closer than this are the same point
_SAME_POINT = 1e-9
_NEWTON_TOL = 1e-12
_PSI_GRID = 4096
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ProxResult1D:
    """Minimizer set of a scalar prox problem.

    ``minimizers`` is sorted ascending and has one or two entries; ``chosen``
    is the element picked by the tie rule (smaller SPF value, then closer to 0).
    """

    minimizers: tuple
    chosen: float
    objective_value: float

    @property
    def is_tie(self) -> bool:
        return len(self.minimizers) > 1


def prox_objective(spec: SpfSpec, x, z, tau):
    """``(x - z)^2 / (2 tau) + spf(x)``."""
    x = np.asarray(x, dtype=float)
    return (x - z) ** 2 / (2.0 * tau) + _spf.evaluate(spec, x)


def _check_tau(tau):
    tau = float(tau)
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ValueError(f"tau must be positive and finite, got {tau}")
    return tau


# ---------------------------------------------------------------------------
# stationary points of one smooth piece

def _closed_form(spec, z, tau, left):
    """Stationary point of a power piece with exponent 1 or 2 (may lie outside)."""
    e = spec.p if left else spec.q
    g = spec.family is Family.G
    if e == 1.0:
        return z - tau if left else z + tau
    # e == 2
    with np.errstate(divide="ignore", invalid="ignore"):
        if left:
            return (z - spec.a * tau) / (1.0 + tau) if g else (z - spec.a * tau) / (1.0 - tau)
        if g:
            return (z + (1.0 + spec.b) * tau) / (1.0 + tau)
        return (z + (spec.b - 1.0) * tau) / (1.0 - tau)


def _newton_root(fun, dfun, lo, hi, flo):
    """Vectorized safeguarded Newton for a bracketed sign change.

    ``flo`` is ``fun(lo)``; a root is known to lie in ``[lo, hi]``.
    """
    lo = lo.copy()
    hi = hi.copy()
    x = 0.5 * (lo + hi)
    sign_lo = np.sign(flo)
    active = np.ones(x.shape, dtype=bool)
    for _ in range(200):
        if not active.any():
            break
        f = fun(x)
        df = dfun(x)
        same = np.sign(f) == sign_lo
        lo = np.where(active & same, x, lo)
        hi = np.where(active & ~same, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - f / df
        bad = ~np.isfinite(xn) | (xn < lo) | (xn > hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        exact = f == 0.0
        xn = np.where(exact, x, xn)
        done = (np.abs(xn - x) <= _NEWTON_TOL) | (hi - lo <= _NEWTON_TOL) | exact
        x = np.where(active, xn, x)
        active &= ~done
    return x


def _bisect_sign_change(fun, lo, hi, flo, iters=100):
    lo = lo.copy()
    hi = hi.copy()
    sign_lo = np.sign(flo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        same = np.sign(fun(mid)) == sign_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
        if np.all(hi - lo <= _NEWTON_TOL):
            break
    return 0.5 * (lo + hi)


def _numeric_stationary(spec, z, tau, left, lo, hi):
    """Up to two stationary points of a power piece on ``[lo, hi]``.

    The second derivative of each piece is monotone, so the derivative of the
    prox objective has at most one inflection point and at most two roots.
    Missing roots are filled with ``lo``.
    """
    d1 = _spf.dpiece_left if left else _spf.dpiece_right
    d2 = _spf.d2piece_left if left else _spf.d2piece_right
    n = z.shape[0]
    lo_v = np.full(n, lo)
    hi_v = np.full(n, hi)

    def dphi(x):
        return (x - z) / tau + d1(spec, x)

    def d2phi(x):
        return 1.0 / tau + d2(spec, x)

    # split at the inflection point of dphi when d2phi changes sign
    c_lo, c_hi = d2phi(lo_v), d2phi(hi_v)
    split = np.sign(c_lo) * np.sign(c_hi) < 0
    mid = hi_v.copy()
    if split.any():
        mid[split] = _bisect_sign_change(d2phi, lo_v[split], hi_v[split], c_lo[split])
    roots = []
    for a_, b_ in ((lo_v, mid), (mid, hi_v)):
        fa, fb = dphi(a_), dphi(b_)
        has = (np.sign(fa) * np.sign(fb) < 0) & (b_ > a_)
        r = lo_v.copy()
        if has.any():
            r[has] = _newton_root(lambda x, m=has: (x - z[m]) / tau + d1(spec, x),
                                  lambda x, m=has: 1.0 / tau + d2(spec, x),
                                  a_[has], b_[has], fa[has])
        # exact zeros of dphi at an end are stationary too
        r = np.where(fa == 0.0, a_, np.where(fb == 0.0, b_, r))
        roots.append(r)
    return roots


def _piece_candidates(spec, z, tau, left):
    lo, hi = (0.0, spec.omega) if left else (spec.omega, 1.0)
    e = spec.p if left else spec.q
    if e in (1.0, 2.0):
        x = _closed_form(spec, z, tau, left)
        x = np.where(np.isfinite(x), x, lo)
        return [np.clip(x, lo, hi)]
    return [np.clip(r, lo, hi) for r in _numeric_stationary(spec, z, tau, left, lo, hi)]


def _psi_dphi(spec, x, z, tau, side):
    """Derivative of the prox objective on one half of the box.

    ``side`` is -1 on [0, 1/2] and +1 on [1/2, 1]; fixing it keeps the
    one-sided limit at the peak instead of a 0 * inf.
    """
    u = np.abs(2.0 * x - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = -2.0 * spec.p_psi * u ** (spec.p_psi - 1.0) * side
        dpsi = _spf._PSI[spec.psi][1](1.0 - u ** spec.p_psi, spec.q)
    return (x - z) / tau + dpsi * inner


def _psi_candidates(spec, z, tau, chunk=256):
    """Grid scan of each half, then bisection on the derivative."""
    out = []
    h = 0.5 / _PSI_GRID
    for side, (g0, g1) in ((-1.0, (0.0, 0.5)), (1.0, (0.5, 1.0))):
        grid = np.linspace(g0, g1, _PSI_GRID + 1)
        res = np.empty_like(z)
        for start in range(0, z.shape[0], chunk):
            zz = z[start:start + chunk]
            vals = prox_objective(spec, grid[None, :], zz[:, None], tau)
            xk = grid[np.argmin(vals, axis=1)]
            lo = np.maximum(xk - h, g0)
            hi = np.minimum(xk + h, g1)
            flo = _psi_dphi(spec, lo, zz, tau, side)
            fhi = _psi_dphi(spec, hi, zz, tau, side)
            has = (flo < 0.0) & (fhi > 0.0)
            if has.any():
                zh = zz[has]
                xk[has] = _bisect_sign_change(
                    lambda x, zh=zh: _psi_dphi(spec, x, zh, tau, side),
                    lo[has], hi[has], flo[has], iters=200)
            res[start:start + chunk] = xk
        out.append(res)
    return out


def _candidates(spec, z, tau):
    n = z.shape[0]
    cols = [np.zeros(n), np.ones(n)]
    if spec.family is Family.PSI:
        cols.append(np.full(n, 0.5))
        cols += _psi_candidates(spec, z, tau)
    else:
        w = spec.omega
        if 0.0 < w < 1.0:
            cols.append(np.full(n, w))
        if w > 0.0:
            cols += _piece_candidates(spec, z, tau, left=True)
        if w < 1.0:
            cols += _piece_candidates(spec, z, tau, left=False)
    return np.stack(cols, axis=1)


def _select(spec, z, tau, cand):
    """Pick the minimizer per row; returns chosen, alternate, tie mask, value."""
    phi = np.asarray(_spf.evaluate(spec, cand))
    vals = (cand - z[:, None]) ** 2 / (2.0 * tau) + phi
    best = vals.min(axis=1)
    tied = vals <= (best + TIE_RTOL * (1.0 + np.abs(best)))[:, None]

    def pick(mask):
        s = np.where(mask, phi, np.inf)
        mask = mask & (s <= s.min(axis=1)[:, None])
        return np.where(mask, cand, np.inf).min(axis=1)

    chosen = pick(tied)
    others = tied & (np.abs(cand - chosen[:, None]) > _SAME_POINT)
    tie = others.any(axis=1)
    alternate = np.where(tie, pick(others), chosen)
    alternate = np.where(np.isfinite(alternate), alternate, chosen)
    return chosen, alternate, tie, best


def prox_vector_full(spec: SpfSpec, z, tau):
    """Elementwise prox with tie information.

    Returns
    -------
    chosen : ndarray
        Element selected by the tie rule.
    alternate : ndarray
        The other minimizer where ``tie`` is set, else equal to ``chosen``.
    tie : ndarray of bool
        Whether the minimizer set has two elements.
    """
    tau = _check_tau(tau)
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size == 0:
        e = np.empty(0)
        return e, e.copy(), np.zeros(0, dtype=bool)
    if not np.all(np.isfinite(z)):
        raise ValueError("prox input contains non-finite entries")
    chosen, alternate, tie, _ = _select(spec, z, tau, _candidates(spec, z, tau))
    return chosen, alternate, tie


def prox_vector(spec: SpfSpec, z, tau) -> np.ndarray:
    """Elementwise prox of ``tau * spf`` over the unit box."""
    return prox_vector_full(spec, z, tau)[0]


def prox_1d(spec: SpfSpec, z: float, tau: float) -> ProxResult1D:
    """Scalar prox with its full minimizer set."""
    tau = _check_tau(tau)
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"z must be finite, got {z}")
    zv = np.array([z])
    chosen, alternate, tie, best = _select(spec, zv, tau, _candidates(spec, zv, tau))
    c = float(chosen[0])
    mins = tuple(sorted({c, float(alternate[0])})) if tie[0] else (c,)
    return ProxResult1D(minimizers=mins, chosen=c,
                        objective_value=float(prox_objective(spec, c, z, tau)))
