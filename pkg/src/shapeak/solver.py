"""ShaPeak: inexact ADMM on the sharp-peak penalty model.

The iteration for ``min f(x) + mu * sum_i spf(x_i)`` over the unit box,
written with the split ``x = w``, is

    w <- prox(x + y / sigma, mu / sigma)                  (exact, separable)
    x <- w - (sigma I + M)^{-1} (grad f(w) + y)            (linearized)
    y <- y + sigma (x - w)

followed by the stop test and a periodic increase of ``mu``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from shapeak import spf as _spf
from shapeak.objective import ObjectiveOracle, apply_inverse
from shapeak.prox import prox_vector
from shapeak.spf import SpfSpec

__all__ = [
    "SolverError",
    "StopReason",
    "SolverParams",
    "SolverState",
    "SolveReport",
    "update_mu",
    "check_stop",
    "default_params",
    "solve",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("k", "mu", "res_xw", "res_grad", "f_w", "L", "Ltilde")
_EXTRA_TRACE = ("dx", "dw", "binary")


class SolverError(RuntimeError):
    """Raised when the objective returns non-finite values or input is invalid."""


class StopReason(str, enum.Enum):
    CRITERION = "Criterion"
    MAX_ITER = "MaxIter"
    TIME_BUDGET = "TimeBudget"


@dataclass
class SolverParams:
    """Hyperparameters of the solver.

    ``eta = 1`` is accepted and freezes ``mu`` at ``mu0``.  ``tau_check``
    defaults to ``1/sigma``.
    """

    mu0: float
    sigma: float
    eta: float = 2.0
    rho: float = 1.0 / 6.0
    eps_mu: float = 1e-8
    k0: int = 10
    eps_stop: float = 1e-4
    max_iter: int = 5000
    time_budget_seconds: float | None = 600.0
    tau_check: float | None = None
    strict: bool = True
    trace_cap: int = 10**6

    def __post_init__(self):
        checks = [
            (self.mu0 > 0, "mu0 must be positive"),
            (self.sigma > 0, "sigma must be positive"),
            (self.eta >= 1, "eta must be at least 1"),
            (0 < self.rho <= 1.0 / 6.0, "rho must lie in (0, 1/6]"),
            (self.eps_mu > 0, "eps_mu must be positive"),
            (int(self.k0) == self.k0 and self.k0 >= 1, "k0 must be a positive integer"),
            (0 < self.eps_stop < 1, "eps_stop must lie in (0, 1)"),
            (int(self.max_iter) == self.max_iter and self.max_iter >= 1,
             "max_iter must be a positive integer"),
            (self.time_budget_seconds is None or self.time_budget_seconds > 0,
             "time budget must be positive"),
            (self.tau_check is None or self.tau_check > 0, "tau_check must be positive"),
            (self.trace_cap >= 2, "trace_cap must be at least 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        for name in ("mu0", "sigma", "eta", "rho", "eps_mu", "eps_stop"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            setattr(self, name, v)
        self.k0 = int(self.k0)
        self.max_iter = int(self.max_iter)

    @property
    def tau(self) -> float:
        return self.tau_check if self.tau_check is not None else 1.0 / self.sigma

    def to_dict(self) -> dict:
        return asdict(self)


class _Trace:
    """Per-iteration records, decimated by 2 whenever the cap is reached."""

    def __init__(self, cap):
        self.cap = cap
        self.stride = 1
        self.rows = []

    def add(self, row):
        if row["k"] % self.stride:
            return
        self.rows.append(row)
        if len(self.rows) >= self.cap:
            self.stride *= 2
            self.rows = [r for r in self.rows if r["k"] % self.stride == 0]

    def column(self, name):
        return np.array([r[name] for r in self.rows])


@dataclass
class SolverState:
    """Current iterate triple plus the penalty weight and history."""

    w: np.ndarray
    x: np.ndarray
    y: np.ndarray
    mu: float
    k: int = 0
    trace: _Trace | None = None


@dataclass
class SolveReport:
    x_final: np.ndarray
    objective: float
    iterations: int
    converged: bool
    stop_reason: StopReason
    mu_final: float
    residual_xw: float
    residual_grad: float
    wall_time: float
    trace: list = field(default_factory=list, repr=False)
    binary_iterate: bool = True
    spec: dict | None = None
    params: dict | None = None

    def trace_column(self, name):
        return np.array([r[name] for r in self.trace])

    def to_dict(self, strict=True, include_trace=False) -> dict:
        d = {
            "x_final": [int(v) for v in self.x_final],
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason.value,
            "mu_final": self.mu_final,
            "residual_xw": self.residual_xw,
            "residual_grad": self.residual_grad,
            "binary_iterate": self.binary_iterate,
            "spec": self.spec,
            "params": self.params,
        }
        if not strict:
            d["wall_time"] = self.wall_time
        if include_trace:
            d["trace"] = [{c: r[c] for c in TRACE_COLUMNS} for r in self.trace]
        if d["params"] is not None and strict:
            d["params"] = {k: v for k, v in d["params"].items() if k != "time_budget_seconds"}
        return d

    def to_json(self, strict=True, include_trace=False) -> str:
        """JSON text; strict mode drops timing fields so reruns are bitwise equal."""
        return json.dumps(self.to_dict(strict, include_trace), sort_keys=True, indent=1)

    def write_trace_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(TRACE_COLUMNS)
            for r in self.trace:
                wr.writerow([repr(r[c]) if isinstance(r[c], float) else r[c]
                             for c in TRACE_COLUMNS])


# ---------------------------------------------------------------------------

def _phi(spec, w):
    return float(np.sum(_spf.evaluate(spec, w)))


def _is_binary(w):
    return bool(np.all((w == 0.0) | (w == 1.0)))


def update_mu(state: SolverState, params: SolverParams, phi_w: float) -> float:
    """Penalty weight after iteration ``state.k``.

    Every ``k0`` iterations, while ``w`` is not binary, ``mu`` grows by
    ``min((eta-1) mu, rho sigma ||x-w||^2 / (phi_w + eps_mu))``.
    """
    mu = state.mu
    if state.k % params.k0 != 0 or phi_w == 0.0:
        return mu
    d = state.x - state.w
    inc = params.rho * params.sigma * float(d @ d) / (phi_w + params.eps_mu)
    return mu + min((params.eta - 1.0) * mu, inc)


def check_stop(state: SolverState, oracle: ObjectiveOracle, params: SolverParams,
               grad_w=None) -> bool:
    """Binary ``w`` and both residuals below ``eps_stop``."""
    if not _is_binary(state.w):
        return False
    g = oracle.gradient(state.w) if grad_w is None else grad_w
    r1 = float(np.linalg.norm(state.x - state.w))
    r2 = float(np.linalg.norm(state.y + g))
    return max(r1, r2) < params.eps_stop


def _lagrangian(f_x, mu, phi_w, y, d, sigma):
    dd = float(d @ d)
    L = f_x + mu * phi_w + float(y @ d) + 0.5 * sigma * dd
    return L, L + 0.375 * sigma * dd


def solve(oracle: ObjectiveOracle, spec: SpfSpec, params: SolverParams, x0=None,
          record_trace=True, callback=None) -> SolveReport:
    """Run ShaPeak from the binary point ``x0`` (default all zeros).

    Parameters
    ----------
    callback : callable, optional
        Called as ``callback(state)`` after every iteration.

    Returns
    -------
    SolveReport
        ``x_final`` is the last ``w`` on convergence, otherwise the best binary
        ``w`` seen (by ``f``, the start point included).
    """
    t_start = time.perf_counter()
    n = oracle.n
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != n:
        raise SolverError(f"x0 has length {x0.size}, expected {n}")
    if not _is_binary(x0):
        raise SolverError("x0 must be binary")
    sigma = params.sigma
    oracle.precond.factor(sigma)

    f0, g0 = oracle.value_and_gradient(x0)
    _check_finite(f0, g0, 0)
    trace = _Trace(params.trace_cap) if record_trace else None
    state = SolverState(w=x0.copy(), x=x0.copy(), y=-g0, mu=params.mu0, k=0, trace=trace)
    if trace is not None:
        trace.add({"k": 0, "mu": state.mu, "res_xw": 0.0, "res_grad": 0.0, "f_w": f0,
                   "L": f0, "Ltilde": f0, "dx": 0.0, "dw": 0.0, "binary": True})

    best_w, best_f = x0.copy(), f0
    reason = StopReason.MAX_ITER
    converged = False
    res_xw = res_grad = 0.0
    for _ in range(params.max_iter):
        w_new = prox_vector(spec, state.x + state.y / sigma, state.mu / sigma)
        f_w, g_w = oracle.value_and_gradient(w_new)
        _check_finite(f_w, g_w, state.k + 1)
        x_new = w_new - apply_inverse(oracle.precond, sigma, g_w + state.y)
        y_new = state.y + sigma * (x_new - w_new)
        dx = float(np.linalg.norm(x_new - state.x))
        dw = float(np.linalg.norm(w_new - state.w))
        state.w, state.x, state.y = w_new, x_new, y_new
        state.k += 1

        d = x_new - w_new
        res_xw = float(np.linalg.norm(d))
        res_grad = float(np.linalg.norm(y_new + g_w))
        binary = _is_binary(w_new)
        if binary and f_w < best_f:
            best_w, best_f = w_new.copy(), f_w
        if binary and max(res_xw, res_grad) < params.eps_stop:
            converged, reason = True, StopReason.CRITERION
        phi_w = _phi(spec, w_new)
        if not converged:
            state.mu = update_mu(state, params, phi_w)
        if trace is not None:
            f_x = oracle.value(x_new)
            L, Lt = _lagrangian(f_x, state.mu, phi_w, y_new, d, sigma)
            trace.add({"k": state.k, "mu": state.mu, "res_xw": res_xw, "res_grad": res_grad,
                       "f_w": f_w, "L": L, "Ltilde": Lt, "dx": dx, "dw": dw,
                       "binary": binary})
        if callback is not None:
            callback(state)
        if converged:
            break
        if (params.time_budget_seconds is not None
                and time.perf_counter() - t_start > params.time_budget_seconds):
            reason = StopReason.TIME_BUDGET
            break

    # x0 is binary, so a binary fallback always exists
    x_final = state.w.copy() if converged else best_w
    binary_iterate = _is_binary(state.w)
    objective = oracle.value(x_final)
    return SolveReport(
        x_final=x_final.astype(np.int8),
        objective=float(objective),
        iterations=state.k,
        converged=converged,
        stop_reason=reason,
        mu_final=float(state.mu),
        residual_xw=res_xw,
        residual_grad=res_grad,
        wall_time=time.perf_counter() - t_start,
        trace=trace.rows if trace is not None else [],
        binary_iterate=binary_iterate,
        spec=spec.to_dict(),
        params=params.to_dict(),
    )


def _check_finite(f, g, k):
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise SolverError(f"objective returned non-finite values at iterate {k}")


# ---------------------------------------------------------------------------
# per-experiment defaults

_FAMILIES = ("recovery", "classical_mimo", "onebit_mimo", "qubo")


def default_params(family: str, **meta) -> SolverParams:
    """Per-experiment hyperparameters.

    Parameters
    ----------
    family : {"recovery", "classical_mimo", "onebit_mimo", "qubo"}
    **meta
        ``recovery``: ``n``, ``s``, ``q`` and ``bA_norm`` (``||A^T b||``).
        ``classical_mimo``: ``n`` (real dimension) and ``yH_inf`` (``||A^T b||_inf``).
        ``onebit_mimo``: ``n`` and ``yH_inf`` (``||H^T y||_inf``).
        ``qubo``: ``Q_fro`` (Frobenius norm of ``Q``).
        Any :class:`SolverParams` field passed here overrides the default.
    """
    overrides = {k: meta.pop(k) for k in list(meta) if k in SolverParams.__dataclass_fields__}
    if family == "recovery":
        n, s, q = int(meta["n"]), float(meta["s"]), float(meta["q"])
        ratio = s / n
        sigma = max(0.6 - ratio, 0.01) * 10.0 ** (q - 3.0)
        t = 4.0 - 2.0 * q - 10.0 * ratio
        mu0 = 5.0 / math.sqrt(n) * 10.0 ** t * float(meta["bA_norm"])
        k0 = max(10, 2 * math.ceil(100.0 * s / (n * (q - 1.0))))
        base = dict(mu0=mu0, sigma=sigma, eta=2.5, k0=k0)
    elif family == "classical_mimo":
        N = float(meta["n"])
        base = dict(mu0=math.sqrt(N) * 1e-4 * float(meta["yH_inf"]),
                    sigma=32.0 / math.log10(N), eta=3.0, k0=10)
    elif family == "onebit_mimo":
        N = float(meta["n"])
        r = 0.0 if N < 5000 else 1.0
        base = dict(mu0=(1.0 + 4.0 * r) * 1e-3 * math.log10(N) * float(meta["yH_inf"]),
                    sigma=0.001 * N, eta=2.25 + 0.25 * r, k0=10)
    elif family == "qubo":
        base = dict(mu0=0.5e-5 * float(meta["Q_fro"]), sigma=0.01, eta=2.1, k0=10)
    else:
        raise ValueError(f"unknown problem family {family!r}; expected one of {_FAMILIES}")
    if base["mu0"] <= 0.0:
        # degenerate data (e.g. b = 0): any positive weight works
        base["mu0"] = 1e-8
    base.update(overrides)
    return SolverParams(**base)
