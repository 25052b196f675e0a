"""Sharp-peak functions on the unit interval.

Three families are supported:

* ``G``: convex power pieces ``g1(x) = ((x+a)^p - a^p)/p`` left of ``omega`` and
  ``g2(x) = ((1+b-x)^q - b^q)/q`` right of it,
* ``H``: concave power pieces ``h1(x) = (a^p - (a-x)^p)/p`` and
  ``h2(x) = (b^q - (x-1+b)^q)/q``,
* ``PSI``: ``psi(1 - |2x-1|^p_psi)`` for a choice of outer function ``psi``.

At the branch point ``x = omega`` the G/H families take the smaller of the two
branch values; no continuity is assumed.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Family",
    "Psi",
    "SpfSpec",
    "SpfParameterError",
    "SpfDomainError",
    "CustomPenalty",
    "ValidationReport",
    "evaluate",
    "branch_values",
    "derivative",
    "subdifferential",
    "subgradient_bound",
    "validate_spf",
]


class SpfParameterError(ValueError):
    """Invalid sharp-peak function parameters."""


class SpfDomainError(ValueError):
    """Evaluation point outside [0, 1]."""


class Family(str, enum.Enum):
    G = "GFamily"
    H = "HFamily"
    PSI = "PsiAbs"


class Psi(str, enum.Enum):
    IDENTITY = "Identity"
    POWER = "Power"
    LOG1P = "Log1p"
    EXPM1 = "ExpM1"
    SIN = "Sin"
    TAN = "Tan"


@dataclass(frozen=True)
class SpfSpec:
    """Parameters of one sharp-peak function.

    For the ``PSI`` family, ``p_psi`` is the inner exponent and ``q`` doubles as
    the exponent of ``Psi.POWER``; ``omega``, ``a``, ``b`` and ``p`` are unused.
    """

    family: Family = Family.G
    omega: float = 0.5
    a: float = 2.5
    b: float = 2.5
    p: float = 2.0
    q: float = 2.0
    psi: Psi = Psi.IDENTITY
    p_psi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "psi", Psi(self.psi))
        for name in ("omega", "a", "b", "p", "q", "p_psi"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise SpfParameterError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.family is Family.PSI:
            if not 0.0 < self.p_psi <= 1.0:
                raise SpfParameterError(f"p_psi must lie in (0, 1], got {self.p_psi}")
            if self.psi is Psi.POWER and not 0.0 < self.q <= 1.0:
                raise SpfParameterError(f"power psi needs q in (0, 1], got {self.q}")
            return
        if not 0.0 <= self.omega <= 1.0:
            raise SpfParameterError(f"omega must lie in [0, 1], got {self.omega}")
        if self.a < 1.0 or self.b < 1.0:
            raise SpfParameterError(f"a and b must be >= 1, got a={self.a}, b={self.b}")
        if self.p <= 0.0 or self.q <= 0.0:
            raise SpfParameterError(f"p and q must be positive, got p={self.p}, q={self.q}")

    @classmethod
    def g(cls, omega, a, b, p, q) -> "SpfSpec":
        return cls(Family.G, omega, a, b, p, q)

    @classmethod
    def h(cls, omega, a, b, p, q) -> "SpfSpec":
        return cls(Family.H, omega, a, b, p, q)

    @classmethod
    def psi_abs(cls, psi=Psi.IDENTITY, p=1.0, q=1.0) -> "SpfSpec":
        return cls(Family.PSI, psi=psi, p_psi=p, q=q)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.value
        d["psi"] = self.psi.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SpfSpec":
        keys = ("family", "omega", "a", "b", "p", "q", "psi", "p_psi")
        return cls(**{k: d[k] for k in keys if k in d})

    @classmethod
    def from_json(cls, text: str) -> "SpfSpec":
        return cls.from_dict(json.loads(text))

    def __str__(self):
        if self.family is Family.PSI:
            return f"psi[{self.psi.value}](1-|2x-1|^{self.p_psi:g})"
        return (f"{self.family.name.lower()}(.;{self.omega:g},{self.a:g},{self.b:g},"
                f"{self.p:g},{self.q:g})")


# ---------------------------------------------------------------------------
# branch pieces (valid on the whole box, used by prox and stationarity too)

def piece_left(spec, x):
    """Left branch value (g1 or h1)."""
    a, p = spec.a, spec.p
    if spec.family is Family.G:
        return ((x + a) ** p - a ** p) / p
    return (a ** p - np.abs(a - x) ** p) / p


def piece_right(spec, x):
    """Right branch value (g2 or h2)."""
    b, q = spec.b, spec.q
    if spec.family is Family.G:
        return (np.abs(1.0 + b - x) ** q - b ** q) / q
    return (b ** q - np.abs(x - 1.0 + b) ** q) / q


def dpiece_left(spec, x):
    a, p = spec.a, spec.p
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.family is Family.G:
            return (x + a) ** (p - 1.0)
        return np.abs(a - x) ** (p - 1.0)


def dpiece_right(spec, x):
    b, q = spec.b, spec.q
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.family is Family.G:
            return -np.abs(1.0 + b - x) ** (q - 1.0)
        return -np.abs(x - 1.0 + b) ** (q - 1.0)


def d2piece_left(spec, x):
    a, p = spec.a, spec.p
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.family is Family.G:
            return (p - 1.0) * (x + a) ** (p - 2.0)
        return -(p - 1.0) * np.abs(a - x) ** (p - 2.0)


def d2piece_right(spec, x):
    b, q = spec.b, spec.q
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.family is Family.G:
            return (q - 1.0) * np.abs(1.0 + b - x) ** (q - 2.0)
        return -(q - 1.0) * np.abs(x - 1.0 + b) ** (q - 2.0)


_PSI = {
    Psi.IDENTITY: (lambda t, q: t, lambda t, q: np.ones_like(t)),
    Psi.POWER: (lambda t, q: np.abs(t) ** q,
                lambda t, q: q * np.abs(t) ** (q - 1.0)),
    Psi.LOG1P: (lambda t, q: np.log1p(t), lambda t, q: 1.0 / (1.0 + t)),
    Psi.EXPM1: (lambda t, q: np.expm1(t), lambda t, q: np.exp(t)),
    Psi.SIN: (lambda t, q: np.sin(t), lambda t, q: np.cos(t)),
    Psi.TAN: (lambda t, q: np.tan(t), lambda t, q: 1.0 / np.cos(t) ** 2),
}

# inf of psi' over [0, 1]
_PSI_SLOPE_INF = {
    Psi.IDENTITY: lambda q: 1.0,
    Psi.POWER: lambda q: q,
    Psi.LOG1P: lambda q: 0.5,
    Psi.EXPM1: lambda q: 1.0,
    Psi.SIN: lambda q: math.cos(1.0),
    Psi.TAN: lambda q: 1.0,
}


def _psi_inner(spec, x):
    return 1.0 - np.abs(2.0 * x - 1.0) ** spec.p_psi


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(~((x >= 0.0) & (x <= 1.0))):
        raise SpfDomainError("sharp-peak functions are evaluated on [0, 1] only")
    return x


def branch_values(spec: SpfSpec, x):
    """Return ``(left, right)`` branch values at ``x`` (G/H families)."""
    x = np.asarray(x, dtype=float)
    return piece_left(spec, x), piece_right(spec, x)


def evaluate(spec: SpfSpec, x):
    """Evaluate the sharp-peak function at ``x`` (scalar or array in [0, 1])."""
    x = _check_domain(x)
    if spec.family is Family.PSI:
        psi, _ = _PSI[spec.psi]
        out = psi(_psi_inner(spec, x), spec.q)
        # exact zeros at the binary points
        out = np.where((x == 0.0) | (x == 1.0), 0.0, out)
        return out if out.ndim else float(out)
    left, right = branch_values(spec, x)
    out = np.where(x < spec.omega, left,
                   np.where(x > spec.omega, right, np.minimum(left, right)))
    out = np.where((x == 0.0) | (x == 1.0), 0.0, out)
    return out if out.ndim else float(out)


def derivative(spec: SpfSpec, x):
    """Classical derivative away from the branch point (and x = 1/2 for PSI).

    At ``x == omega`` the left derivative is returned; use
    :func:`subdifferential` for set-valued information.
    """
    x = np.asarray(x, dtype=float)
    if spec.family is Family.PSI:
        _, dpsi = _PSI[spec.psi]
        u = 2.0 * x - 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = -2.0 * spec.p_psi * np.abs(u) ** (spec.p_psi - 1.0) * np.sign(u)
            out = dpsi(_psi_inner(spec, x), spec.q) * inner
        return out if out.ndim else float(out)
    out = np.where(x <= spec.omega, dpiece_left(spec, x), dpiece_right(spec, x))
    return out if out.ndim else float(out)


def subdifferential(spec: SpfSpec, x: float) -> list[tuple[float, float]]:
    """Limiting subdifferential of the SPF (extended to R) at a point of [0, 1].

    Returned as a list of closed intervals ``(lo, hi)``; a singleton is
    ``(v, v)`` and unbounded ends are ``+-inf``.  An empty list means the
    subdifferential is empty.
    """
    x = float(_check_domain(x))
    inf = math.inf
    if spec.family is Family.PSI:
        if x == 0.5:
            if spec.p_psi < 1.0:
                return []
            _, dpsi = _PSI[spec.psi]
            s = 2.0 * float(dpsi(np.float64(1.0), spec.q))
            return [(-s, -s), (s, s)]
        v = float(derivative(spec, x))
        return [(v, v)]
    w = spec.omega
    if x != w:
        v = float(dpiece_left(spec, x) if x < w else dpiece_right(spec, x))
        return [(v, v)]
    g1, g2 = (float(t) for t in branch_values(spec, x))
    d1 = float(dpiece_left(spec, x))
    d2 = float(dpiece_right(spec, x))
    if w == 0.0:
        # g(0) = 0 < right piece: only the right piece is active nearby
        return [(d1, inf)]
    if w == 1.0:
        return [(-inf, d2)]
    if g1 < g2:
        return [(d1, inf)]
    if g1 > g2:
        return [(-inf, d2)]
    return [(d1, d1), (d2, d2)]


def subgradient_bound(spec: SpfSpec) -> float:
    """Uniform lower bound ``c`` on ``|nu|`` over all subgradients on [0, 1].

    For the PSI family the bound ``2 * p_psi * inf psi'`` is conservative: the
    inner slope ``2p|2x-1|^(p-1)`` is at least ``2p`` for ``p <= 1``.
    """
    if spec.family is Family.PSI:
        return 2.0 * spec.p_psi * _PSI_SLOPE_INF[spec.psi](spec.q)
    a, b, p, q, w = spec.a, spec.b, spec.p, spec.q, spec.omega
    if spec.family is Family.G:
        if w == 0.0:
            cands = (a ** (p - 1), (b + 1) ** (q - 1), b ** (q - 1))
        elif w == 1.0:
            cands = (a ** (p - 1), (a + 1) ** (p - 1), b ** (q - 1))
        else:
            cands = ((w + a) ** (p - 1), a ** (p - 1), (b + 1 - w) ** (q - 1), b ** (q - 1))
        return float(min(cands))
    # H family: |h1'| = (a-x)^(p-1) on [0, w], |h2'| = (x-1+b)^(q-1) on [w, 1];
    # both are monotone, so the extremes sit at the ends of each piece
    cands = []
    if w > 0.0:
        cands += [a ** (p - 1), (a - w) ** (p - 1)]
    else:
        cands.append(a ** (p - 1))
    if w < 1.0:
        cands += [b ** (q - 1), (w - 1 + b) ** (q - 1)]
    else:
        cands.append(b ** (q - 1))
    return float(min(cands))


# ---------------------------------------------------------------------------
# validation

@dataclass
class CustomPenalty:
    """A scalar penalty given by callables, for probing non-SPF candidates."""

    value: Callable
    deriv: Callable
    name: str = "custom"
    bound: float = 0.0


@dataclass
class ValidationReport:
    name: str
    grid_size: int
    interior_min: float
    endpoint_values: tuple[float, float]
    min_abs_subgradient: float
    argmin_abs_subgradient: float
    bound: float
    passed: bool
    violations: list[str] = field(default_factory=list)


def validate_spf(spec, grid_size: int = 101) -> ValidationReport:
    """Probe the sharp-peak conditions numerically on a uniform grid.

    ``spec`` is an :class:`SpfSpec` or a :class:`CustomPenalty`.
    """
    if grid_size < 3:
        raise ValueError("grid_size must be at least 3")
    xs = np.linspace(0.0, 1.0, grid_size)
    if isinstance(spec, CustomPenalty):
        vals = np.asarray(spec.value(xs), dtype=float)
        slopes = [np.atleast_1d(np.abs(np.asarray(spec.deriv(xs), dtype=float)))]
        slope_x = [xs]
        bound, name = spec.bound, spec.name
    else:
        vals = np.asarray(evaluate(spec, xs))
        bound, name = subgradient_bound(spec), str(spec)
        slopes, slope_x = [], []
        for x in xs:
            for lo, hi in subdifferential(spec, x):
                # smallest |nu| over the interval
                m = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
                slopes.append(np.array([m]))
                slope_x.append(np.array([x]))
    slopes = np.concatenate(slopes)
    slope_x = np.concatenate(slope_x)
    i = int(np.argmin(slopes))
    interior = vals[1:-1]
    report = ValidationReport(
        name=name,
        grid_size=grid_size,
        interior_min=float(interior.min()),
        endpoint_values=(float(vals[0]), float(vals[-1])),
        min_abs_subgradient=float(slopes[i]),
        argmin_abs_subgradient=float(slope_x[i]),
        bound=float(bound),
        passed=True,
    )
    if vals[0] != 0.0 or vals[-1] != 0.0:
        report.violations.append(f"nonzero value at a binary point: {report.endpoint_values}")
    if not interior.min() > 0.0:
        j = int(np.argmin(interior)) + 1
        report.violations.append(f"nonpositive interior value at {xs[j]:g}")
    if slopes[i] <= 0.0:
        report.violations.append(f"zero derivative at {slope_x[i]:g}")
    elif slopes[i] < bound - 1e-9:
        report.violations.append(
            f"subgradient magnitude {slopes[i]:g} below bound {bound:g} at {slope_x[i]:g}")
    report.passed = not report.violations
    return report
