"""Seeded problem generators, accuracy metrics and on-disk persistence.

Random streams
--------------
Every generator draws from Philox counter-based generators.  The stream for
a named quantity (``"A"``, ``"noise"``, ...) is keyed by

    SeedSequence(seed, spawn_key=(crc32(kind), crc32(name)))

so each matrix and vector has its own substream and adding a new quantity
never shifts the others.  Any Philox implementation seeded the same way
reproduces the data.
"""

from __future__ import annotations

import json
import math
import os
import zlib
from dataclasses import dataclass, field

import numpy as np
import scipy.io as sio
import scipy.linalg as sla
import scipy.sparse as sp

from shapeak import objective as _obj
from shapeak.solver import SolverParams, default_params

__all__ = [
    "KINDS",
    "InstanceError",
    "ProblemInstance",
    "substream",
    "gen_recovery",
    "gen_classical_mimo",
    "gen_onebit",
    "gen_qubo",
    "gen_quadratic",
    "example2_instance",
    "correlation_matrix",
    "metric_acc",
    "metric_ber",
    "metric_gap",
    "lower_median",
    "save_instance",
    "load_instance",
]

KINDS = ("Recovery", "ClassicalMimo", "OneBitMimo", "Qubo", "Quadratic")
_SPARSE_RECOVERY_N = 10**5
_SPARSE_QUBO_N = 10**4


class InstanceError(ValueError):
    """Invalid generator arguments or a malformed instance file."""


def substream(seed: int, kind: str, name: str) -> np.random.Generator:
    """Independent Philox generator for quantity ``name`` of an instance kind."""
    key = (zlib.crc32(kind.encode()), zlib.crc32(name.encode()))
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class ProblemInstance:
    """One generated (or loaded) problem.

    ``data`` holds the arrays the oracle needs: ``A, b`` (recovery and
    classical MIMO), ``H, y`` (one-bit) or ``Q, q`` (QUBO / quadratic).
    """

    kind: str
    data: dict
    ground_truth: np.ndarray | None = None
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InstanceError(f"unknown instance kind {self.kind!r}")
        if self.ground_truth is not None:
            gt = np.asarray(self.ground_truth, dtype=float).reshape(-1)
            if not np.all((gt == 0) | (gt == 1)):
                raise InstanceError("ground truth must be binary")
            if gt.size != self.n:
                raise InstanceError(f"ground truth has length {gt.size}, expected {self.n}")
            self.ground_truth = gt

    @property
    def n(self) -> int:
        if self.kind in ("Recovery", "ClassicalMimo"):
            return self.data["A"].shape[1]
        if self.kind == "OneBitMimo":
            return self.data["H"].shape[1]
        return self.data["Q"].shape[0]

    def oracle(self, precond=None) -> _obj.ObjectiveOracle:
        """Objective oracle with the family's standard preconditioner."""
        d = self.data
        if self.kind in ("Recovery", "ClassicalMimo"):
            return _obj.recovery_oracle(d["A"], d["b"], self.metadata.get("q", 2.0),
                                        precond=precond or "gram")
        if self.kind == "OneBitMimo":
            return _obj.onebit_oracle(d["H"], d["y"], self.metadata["rho"],
                                      precond=precond or "hessian")
        q = d.get("q")
        q = np.zeros(self.n) if q is None else q
        return _obj.quadratic_oracle(d["Q"], q, precond=precond or "zero")

    def default_params(self, **overrides) -> SolverParams:
        """Per-family hyperparameters for this instance."""
        d, md = self.data, self.metadata
        if self.kind == "Recovery":
            bA = float(np.linalg.norm(d["A"].T @ d["b"]))
            return default_params("recovery", n=self.n, s=md["s"], q=md.get("q", 2.0),
                                  bA_norm=bA, **overrides)
        if self.kind == "ClassicalMimo":
            return default_params("classical_mimo", n=self.n,
                                  yH_inf=float(np.max(np.abs(d["A"].T @ d["b"]))), **overrides)
        if self.kind == "OneBitMimo":
            return default_params("onebit_mimo", n=self.n,
                                  yH_inf=float(np.max(np.abs(d["H"].T @ d["y"]))), **overrides)
        Q = d["Q"]
        fro = sp.linalg.norm(Q) if sp.issparse(Q) else float(np.linalg.norm(Q))
        if self.kind == "Qubo":
            return default_params("qubo", Q_fro=fro, **overrides)
        if "mu0" not in overrides or "sigma" not in overrides:
            raise InstanceError("generic quadratic instances need explicit mu0 and sigma")
        return SolverParams(**overrides)

    def default_start(self) -> np.ndarray:
        """Binary start point: zeros, except all ones for QUBO.

        A QUBO has ``grad f(0) = 0``, so the all-zero start is a fixed point
        of the iteration.
        """
        if self.kind == "Qubo":
            return np.ones(self.n)
        return np.zeros(self.n)


# ---------------------------------------------------------------------------
# generators

def _check_pos(**dims):
    for k, v in dims.items():
        if int(v) != v or v < 1:
            raise InstanceError(f"{k} must be a positive integer, got {v}")


def gen_recovery(m, n, s, q=2.0, nf=0.0, seed=0) -> ProblemInstance:
    """Sparse binary signal observed through a Gaussian matrix.

    ``A`` has i.i.d. standard normal entries, divided by ``sqrt(m)`` when
    ``n <= 1e4``; for ``n >= 1e5`` it is sparse with about 1e8 nonzeros.
    ``b = A x* + nf * eps``.
    """
    _check_pos(m=m, n=n, s=s)
    if s > n:
        raise InstanceError(f"s={s} exceeds n={n}")
    if not q > 1.0:
        raise InstanceError(f"exponent q must exceed 1, got {q}")
    m, n, s = int(m), int(n), int(s)
    kind = "Recovery"
    rng_a = substream(seed, kind, "A")
    if n >= _SPARSE_RECOVERY_N:
        density = min(1.0, 1e9 / (5.0 * n * n))
        A = sp.random(m, n, density=density, format="csr", random_state=rng_a,
                      data_rvs=rng_a.standard_normal)
    else:
        A = rng_a.standard_normal((m, n))
        if n <= 10**4:
            A /= math.sqrt(m)
    x_star = np.zeros(n)
    x_star[substream(seed, kind, "support").choice(n, size=s, replace=False)] = 1.0
    b = A @ x_star
    if nf != 0.0:
        b = b + nf * substream(seed, kind, "noise").standard_normal(m)
    return ProblemInstance(kind, {"A": A, "b": b}, x_star, seed,
                           dict(m=m, n=n, s=s, q=float(q), nf=float(nf)))


def correlation_matrix(size: int, r: complex) -> np.ndarray:
    """Hermitian Toeplitz matrix with ``R[i, j] = r^(j-i)`` for ``i <= j``."""
    if abs(r) > 1:
        raise InstanceError(f"|r| must not exceed 1, got {r}")
    k = np.arange(size)
    d = k[None, :] - k[:, None]
    upper = np.power(complex(r), np.abs(d))
    R = np.where(d >= 0, upper, np.conj(upper))
    if np.isrealobj(r) or complex(r).imag == 0:
        R = R.real
    return R


def _psd_factor(R):
    """``P`` with ``R = P P^*``; Cholesky, or an eigen factor when singular."""
    try:
        return sla.cholesky(R, lower=True)
    except np.linalg.LinAlgError:
        vals, vecs = sla.eigh(R)
        if vals.min() < -1e-10 * max(1.0, vals.max()):
            raise InstanceError("correlation matrix is not positive semidefinite")
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def gen_classical_mimo(m_complex, n_real, snr_db, channel="iid", r=0.2, seed=0) -> ProblemInstance:
    """QPSK symbols through a complex channel, lifted to a real quadratic.

    Real and imaginary parts of the symbols lie in {0, 1}.  For the i.i.d.
    channel both parts of ``H`` have N(0, 1/m) entries; the correlated channel
    is ``P Ht Q / sqrt(m)`` with ``R = P P^*``, ``T = Q Q^*`` and ``R = T``
    built from ``r``.  The noise variance follows from
    ``SNR = E||H w||^2 / E||eps||^2``, with the expectation taken in closed
    form over the channel and symbol distributions.
    """
    _check_pos(m_complex=m_complex, n_real=n_real)
    if n_real % 2:
        raise InstanceError(f"n_real must be even, got {n_real}")
    if channel not in ("iid", "correlated"):
        raise InstanceError(f"channel must be 'iid' or 'correlated', got {channel!r}")
    m, nc = int(m_complex), int(n_real) // 2
    kind = "ClassicalMimo"
    rng_h = substream(seed, kind, "H")
    scale = 1.0 / math.sqrt(m) if 2 * nc <= 10**4 else 1.0
    if channel == "iid":
        H = (rng_h.standard_normal((m, nc)) + 1j * rng_h.standard_normal((m, nc))) * scale
        # E|H_ij|^2 = 2 scale^2, E|w_j|^2 = 1, zero-mean channel
        signal = m * nc * 2.0 * scale**2
    else:
        Ht = (rng_h.standard_normal((m, nc)) + 1j * rng_h.standard_normal((m, nc))) / math.sqrt(2)
        R = correlation_matrix(m, r)
        T = correlation_matrix(nc, r)
        P, Qf = _psd_factor(R), _psd_factor(T).conj().T
        H = (P @ Ht @ Qf) * scale
        # E[w w^*] = I/2 + 11^T/2 for symbols in {0,1} + i{0,1}
        QtQ = Qf.conj().T @ Qf
        ew = 0.5 * np.real(np.trace(QtQ)) + 0.5 * np.real(np.sum(QtQ))
        signal = scale**2 * np.real(np.trace(R)) * ew
    rng_w = substream(seed, kind, "symbols")
    w = rng_w.integers(0, 2, nc).astype(float) + 1j * rng_w.integers(0, 2, nc).astype(float)
    snr = 10.0 ** (snr_db / 10.0)
    y = H @ w
    if math.isfinite(snr):
        var = signal / (m * snr)  # per complex entry, split evenly over Re/Im
        e = substream(seed, kind, "noise").standard_normal((2, m)) * math.sqrt(var / 2.0)
        y = y + e[0] + 1j * e[1]
    A = np.block([[H.real, -H.imag], [H.imag, H.real]])
    b = np.concatenate([y.real, y.imag])
    x_star = np.concatenate([w.real, w.imag])
    return ProblemInstance(kind, {"A": A, "b": b}, x_star, seed,
                           dict(m=m, n=2 * nc, snr=float(snr_db), channel=channel,
                                r=float(np.real(r)) if channel == "correlated" else 0.0,
                                q=2.0))


def gen_onebit(m, n, snr_db, seed=0) -> ProblemInstance:
    """One-bit measurements ``y = sgn(H z + v)`` of a random sign vector.

    ``sgn(0) = +1``.  The noise standard deviation ``rho`` solves
    ``SNR = E||Hz||^2 / E||v||^2 = n / rho^2``.
    """
    _check_pos(m=m, n=n)
    m, n = int(m), int(n)
    kind = "OneBitMimo"
    H = substream(seed, kind, "H").standard_normal((m, n))
    z = np.where(substream(seed, kind, "symbols").integers(0, 2, n) == 1, 1.0, -1.0)
    snr = 10.0 ** (snr_db / 10.0)
    rho = math.sqrt(n / snr)
    t = H @ z
    if rho > 0.0 and math.isfinite(snr):
        t = t + rho * substream(seed, kind, "noise").standard_normal(m)
    y = np.where(t >= 0.0, 1.0, -1.0)
    # the likelihood needs a positive noise level even for noiseless data
    rho_model = rho if rho > 0.0 else 1e-3
    return ProblemInstance(kind, {"H": H, "y": y}, (z + 1.0) / 2.0, seed,
                           dict(m=m, n=n, snr=float(snr_db), rho=rho_model))


def _triu_from_linear(idx, n):
    """Row/column of linear positions in the row-major upper triangle (with diagonal)."""
    rows = np.arange(n, dtype=np.int64)
    starts = rows * n - rows * (rows - 1) // 2
    i = np.searchsorted(starts, idx, side="right") - 1
    j = i + (idx - starts[i])
    return i, j


def gen_qubo(n, density=0.8, value_range=(10.0, 100.0), neg_proportion=0.5, seed=0) -> ProblemInstance:
    """Symmetric QUBO matrix with a prescribed fraction of nonzeros.

    ``round(density * n(n+1)/2)`` upper-triangle positions (diagonal included)
    get magnitudes uniform on ``value_range``; a uniformly chosen
    ``round(neg_proportion * count)`` of them are negated; the result is
    mirrored.  Storage is sparse for ``n >= 1e4``.
    """
    _check_pos(n=n)
    if not 0.0 < density <= 1.0:
        raise InstanceError(f"density must lie in (0, 1], got {density}")
    if not 0.0 <= neg_proportion <= 1.0:
        raise InstanceError(f"neg_proportion must lie in [0, 1], got {neg_proportion}")
    lo, hi = map(float, value_range)
    if lo > hi:
        raise InstanceError("value_range must be increasing")
    n = int(n)
    kind = "Qubo"
    total = n * (n + 1) // 2
    count = int(round(density * total))
    pos = np.sort(substream(seed, kind, "positions").choice(total, size=count, replace=False))
    vals = substream(seed, kind, "values").uniform(lo, hi, count)
    neg = substream(seed, kind, "signs").choice(count, size=int(round(neg_proportion * count)),
                                                replace=False)
    vals[neg] *= -1.0
    i, j = _triu_from_linear(pos.astype(np.int64), n)
    off = i != j
    rows = np.concatenate([i, j[off]])
    cols = np.concatenate([j, i[off]])
    data = np.concatenate([vals, vals[off]])
    Q = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    if n < _SPARSE_QUBO_N:
        Q = Q.toarray()
    return ProblemInstance(kind, {"Q": Q}, None, seed,
                           dict(n=n, density=float(density), neg_proportion=float(neg_proportion),
                                value_range=[lo, hi]))


def gen_quadratic(Q, q, seed=0, **metadata) -> ProblemInstance:
    """Wrap explicit quadratic data ``0.5 <x, Qx> + <q, x>``."""
    Q = Q if sp.issparse(Q) else np.asarray(Q, dtype=float)
    return ProblemInstance("Quadratic", {"Q": Q, "q": np.asarray(q, dtype=float)}, None, seed,
                           dict(metadata))


def example2_instance() -> ProblemInstance:
    """Two-variable quadratic with a non-symmetric ``Q`` and minimizer (1, 1)."""
    return gen_quadratic([[1.0, -1.0], [-2.0, 0.0]], [-2.0, 0.5], name="example2")


# ---------------------------------------------------------------------------
# metrics

def metric_acc(x, x_star) -> float:
    """``1 - ||x - x*|| / ||x*||``."""
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x.shape != x_star.shape:
        raise InstanceError("length mismatch")
    nrm = np.linalg.norm(x_star)
    if nrm == 0.0:
        raise InstanceError("accuracy is undefined for a zero ground truth")
    return float(1.0 - np.linalg.norm(x - x_star) / nrm)


def metric_ber(x, x_star) -> float:
    """Fraction of mismatched components."""
    x = np.asarray(x)
    x_star = np.asarray(x_star)
    if x.shape != x_star.shape or x.size == 0:
        raise InstanceError("length mismatch or empty input")
    return float(np.count_nonzero(x != x_star) / x.size)


def metric_gap(obj, lowest, return_flag=False):
    """Relative gap ``|obj - lowest| / |lowest|`` in percent.

    When ``lowest == 0`` the absolute gap is returned instead; with
    ``return_flag`` the result is ``(gap, is_relative)``.
    """
    diff = abs(float(obj) - float(lowest))
    relative = lowest != 0
    gap = diff / abs(float(lowest)) * 100.0 if relative else diff
    return (gap, relative) if return_flag else gap


def lower_median(values) -> float:
    """Median, taking the lower middle element for even counts."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return math.nan
    return float(v[(v.size - 1) // 2])


# ---------------------------------------------------------------------------
# persistence

def _write_matrix(path, M):
    sio.mmwrite(path, sp.coo_matrix(M) if sp.issparse(M) else np.asarray(M), precision=17)


def _read_matrix(path):
    M = sio.mmread(path)
    return M.tocsr() if sp.issparse(M) else np.asarray(M, dtype=float)


def _write_vector(path, v):
    np.savetxt(path, np.asarray(v, dtype=float).reshape(-1), fmt="%.17g")


def _read_vector(path):
    if str(path).endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            return np.asarray(json.load(fh), dtype=float)
    return np.atleast_1d(np.loadtxt(path, dtype=float, ndmin=1))


def save_instance(inst: ProblemInstance, out_dir, stem="instance") -> str:
    """Write ``<stem>.json`` plus MatrixMarket/text files; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    for name, value in inst.data.items():
        if value is None:
            continue
        if sp.issparse(value) or np.ndim(value) == 2:
            fname = f"{stem}_{name}.mtx"
            _write_matrix(os.path.join(out_dir, fname), value)
        else:
            fname = f"{stem}_{name}.txt"
            _write_vector(os.path.join(out_dir, fname), value)
        files[name] = fname
    if inst.ground_truth is not None:
        fname = f"{stem}_ground_truth.txt"
        _write_vector(os.path.join(out_dir, fname), inst.ground_truth)
        files["ground_truth"] = fname
    manifest = {"kind": inst.kind, "seed": int(inst.seed), "metadata": inst.metadata,
                "files": files}
    path = os.path.join(out_dir, f"{stem}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def load_instance(path) -> ProblemInstance:
    """Inverse of :func:`save_instance`; vectors may also be JSON arrays."""
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        kind = manifest["kind"]
        files = manifest["files"]
    except (OSError, ValueError, KeyError, TypeError) as err:
        raise InstanceError(f"cannot read manifest {path}: {err}") from err
    base = os.path.dirname(os.path.abspath(path))
    data, gt = {}, None
    for name, fname in files.items():
        full = os.path.join(base, fname)
        if name == "ground_truth":
            gt = _read_vector(full)
        elif fname.endswith(".mtx"):
            data[name] = _read_matrix(full)
        else:
            data[name] = _read_vector(full)
    return ProblemInstance(kind, data, gt, manifest.get("seed", 0), manifest.get("metadata", {}))
