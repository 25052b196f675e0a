"""Command-line front end: ``shapeak generate | solve | bench | verify``.

Every subcommand accepts ``--config FILE``, an INI file whose section named
after the subcommand supplies defaults; explicit flags always win.

Exit codes: 0 success, 2 usage error, 3 iteration or time budget exhausted,
4 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from shapeak import instances as _inst
from shapeak import oracle as _orc
from shapeak.objective import quadratic_oracle, spectral_norm
from shapeak.solver import SolverParams, StopReason, solve
from shapeak.spf import Psi, SpfSpec
from shapeak.stationarity import is_p_stationary, kkt_residual, mu_bar

__all__ = ["main", "build_parser", "RunConfig", "EXIT_OK", "EXIT_USAGE", "EXIT_BUDGET",
           "EXIT_VERIFY", "BENCH_COLUMNS", "VERIFY_CASES"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BUDGET = 3
EXIT_VERIFY = 4

BENCH_COLUMNS = ("family", "param", "value", "trial_count", "metric_name", "median", "best",
                 "time_s")
VERIFY_CASES = ("example2", "example1-negative-control", "descent-lemma", "linear-rate")

# solver flag -> SolverParams field
_PARAM_FLAGS = {"mu0": "mu0", "sigma": "sigma", "eta": "eta", "rho": "rho", "k0": "k0",
                "eps": "eps_stop", "eps_mu": "eps_mu", "max_iter": "max_iter",
                "time_budget": "time_budget_seconds", "tau_check": "tau_check"}


class UsageError(Exception):
    """Bad command-line or config input."""


# ---------------------------------------------------------------------------
# config files

@dataclass
class RunConfig:
    """Sectioned key-value settings, one section per subcommand."""

    sections: dict = field(default_factory=dict)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as err:
            raise UsageError(f"malformed config: {err}") from err
        return cls({s: dict(cp.items(s)) for s in cp.sections()})

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.loads(fh.read())
        except OSError as err:
            raise UsageError(f"cannot read config {path}: {err}") from err

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name, items in self.sections.items():
            cp[name] = {k: str(v) for k, v in items.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _apply_config(sub: argparse.ArgumentParser, items: dict) -> None:
    """Install config values as typed defaults of a subparser."""
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in items.items():
        dest = key.replace("-", "_")
        act = actions.get(dest)
        if act is None or not act.option_strings:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[dest] = _parse_bool(raw)
        elif act.type is not None:
            try:
                defaults[dest] = act.type(raw)
            except (TypeError, ValueError) as err:
                raise UsageError(f"bad value for {key}: {raw!r}") from err
        else:
            defaults[dest] = raw
        if act.required:
            act.required = False
    sub.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from err


def _add_spf_flags(p, default="g"):
    g = p.add_argument_group("sharp-peak function")
    g.add_argument("--spf", choices=["g", "h", "psi"], default=default)
    g.add_argument("--omega", type=float, default=0.5)
    g.add_argument("--a", type=float, default=2.5)
    g.add_argument("--b", type=float, default=2.5)
    g.add_argument("--p", type=float, default=2.0)
    g.add_argument("--q", type=float, default=2.0)
    g.add_argument("--psi", choices=[v.value for v in Psi], default=Psi.IDENTITY.value)


def _add_param_flags(p):
    g = p.add_argument_group("solver parameters (override family defaults)")
    g.add_argument("--mu0", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--eta", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--k0", type=int)
    g.add_argument("--eps", type=float, help="stopping tolerance")
    g.add_argument("--eps-mu", dest="eps_mu", type=float)
    g.add_argument("--max-iter", dest="max_iter", type=int)
    g.add_argument("--time-budget", dest="time_budget", type=float, help="seconds")
    g.add_argument("--tau-check", dest="tau_check", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shapeak", description="Binary optimization with sharp-peak penalties.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a problem instance")
    gen.add_argument("--config")
    gen.add_argument("kind", choices=["recovery", "classical-mimo", "onebit", "qubo", "example2"])
    gen.add_argument("--m", type=int)
    gen.add_argument("--n", type=int)
    gen.add_argument("--s", type=int)
    gen.add_argument("--q", type=float, default=2.0, help="loss exponent (recovery)")
    gen.add_argument("--nf", type=float, default=0.0)
    gen.add_argument("--snr", type=float, help="dB")
    gen.add_argument("--channel", choices=["iid", "correlated"], default="iid")
    gen.add_argument("--r", type=float, default=0.2)
    gen.add_argument("--density", type=float, default=0.8)
    gen.add_argument("--neg", type=float, default=0.5, help="share of negated QUBO entries")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default=".", help="output directory")
    gen.add_argument("--stem", default="instance")

    sol = sub.add_parser("solve", help="solve an instance manifest")
    sol.add_argument("--config")
    sol.add_argument("manifest")
    _add_spf_flags(sol)
    _add_param_flags(sol)
    sol.add_argument("--x0", choices=["default", "zeros", "ones"], default="default")
    sol.add_argument("--out", help="report JSON path (default: stdout)")
    sol.add_argument("--trace", help="trace CSV path")
    sol.add_argument("--non-strict", dest="non_strict", action="store_true",
                     help="include timing fields in the report")

    ben = sub.add_parser("bench", help="run a parameter sweep")
    ben.add_argument("--config")
    ben.add_argument("family", choices=["recovery", "classical-mimo", "onebit", "qubo"])
    ben.add_argument("--param", required=True, help="instance parameter to vary")
    ben.add_argument("--values", type=_floats, required=True)
    ben.add_argument("--trials", type=int, default=20)
    ben.add_argument("--seed0", type=int, default=0)
    ben.add_argument("--fixed", action="append", default=[], metavar="KEY=VALUE",
                     help="fixed instance parameter (repeatable)")
    ben.add_argument("--workers", type=int)
    ben.add_argument("--out", help="CSV path (default: stdout)")
    _add_spf_flags(ben)
    _add_param_flags(ben)

    ver = sub.add_parser("verify", help="check a built-in case or an instance")
    ver.add_argument("--config")
    ver.add_argument("case", help=f"one of {', '.join(VERIFY_CASES)} or a manifest path")
    ver.add_argument("--n", type=int, default=16)
    ver.add_argument("--seeds", type=int, default=20)
    ver.add_argument("--out", help="JSON path (default: stdout)")
    # without --spf each built-in case uses its own penalty
    _add_spf_flags(ver, default=None)
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = RunConfig.load(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, cfg.sections.get(args.command, {}))
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# helpers

def _spec_from(args) -> SpfSpec | None:
    if args.spf is None:
        return None
    if args.spf == "psi":
        return SpfSpec.psi_abs(Psi(args.psi), args.p, args.q)
    make = SpfSpec.g if args.spf == "g" else SpfSpec.h
    return make(args.omega, args.a, args.b, args.p, args.q)


def _overrides(args) -> dict:
    out = {}
    for flag, name in _PARAM_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            out[name] = v
    return out


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _workers(requested):
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("SHAPEAK_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as err:
            raise UsageError(f"SHAPEAK_THREADS must be an integer, got {cap!r}") from err
    return max(1, n)


# ---------------------------------------------------------------------------
# generate

def _need(args, *names):
    missing = [f"--{n}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"{args.kind} needs {', '.join(missing)}")


def _make_instance(kind, opts: dict, seed: int):
    try:
        if kind == "recovery":
            return _inst.gen_recovery(int(opts["m"]), int(opts["n"]), int(opts["s"]),
                                      float(opts.get("q", 2.0)), float(opts.get("nf", 0.0)), seed)
        if kind == "classical-mimo":
            return _inst.gen_classical_mimo(int(opts["m"]), int(opts["n"]), float(opts["snr"]),
                                            opts.get("channel", "iid"), float(opts.get("r", 0.2)),
                                            seed)
        if kind == "onebit":
            return _inst.gen_onebit(int(opts["m"]), int(opts["n"]), float(opts["snr"]), seed)
        if kind == "qubo":
            return _inst.gen_qubo(int(opts["n"]), float(opts.get("density", 0.8)),
                                  neg_proportion=float(opts.get("neg", 0.5)), seed=seed)
    except KeyError as err:
        raise UsageError(f"{kind} needs --{err.args[0]}") from err
    if kind == "example2":
        return _inst.example2_instance()
    raise UsageError(f"unknown kind {kind!r}")


def cmd_generate(args) -> int:
    need = {"recovery": ("m", "n", "s"), "classical-mimo": ("m", "n", "snr"),
            "onebit": ("m", "n", "snr"), "qubo": ("n",), "example2": ()}[args.kind]
    _need(args, *need)
    opts = {k: getattr(args, k) for k in ("m", "n", "s", "q", "nf", "snr", "channel", "r",
                                          "density", "neg") if getattr(args, k) is not None}
    inst = _make_instance(args.kind, opts, args.seed)
    path = _inst.save_instance(inst, args.out, args.stem)
    print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve

def _start(inst, how):
    if how == "zeros":
        return np.zeros(inst.n)
    if how == "ones":
        return np.ones(inst.n)
    return inst.default_start()


def cmd_solve(args) -> int:
    try:
        inst = _inst.load_instance(args.manifest)
    except _inst.InstanceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    spec = _spec_from(args)
    try:
        params = inst.default_params(**_overrides(args))
    except (_inst.InstanceError, ValueError, TypeError) as err:
        raise UsageError(str(err)) from err
    rep = solve(inst.oracle(), spec, params, x0=_start(inst, args.x0),
                record_trace=bool(args.trace))
    _emit(rep.to_json(strict=not args.non_strict) + "\n", args.out)
    if args.trace:
        rep.write_trace_csv(args.trace)
    if rep.converged:
        return EXIT_OK
    return EXIT_BUDGET if rep.stop_reason in (StopReason.MAX_ITER, StopReason.TIME_BUDGET) \
        else EXIT_OK


# ---------------------------------------------------------------------------
# bench

_METRICS = {"recovery": "Acc", "classical-mimo": "BER", "onebit": "BER", "qubo": "Gap"}


def _trial(job):
    """One seeded instance; returns (metric value, seconds) or an error string."""
    family, opts, seed, spec_dict, overrides = job
    try:
        inst = _make_instance(family, opts, seed)
        spec = SpfSpec.from_dict(spec_dict)
        t0 = time.perf_counter()
        params = inst.default_params(**overrides)
        rep = solve(inst.oracle(), spec, params, x0=inst.default_start(), record_trace=False)
        elapsed = time.perf_counter() - t0
        if family == "recovery":
            val = _inst.metric_acc(rep.x_final, inst.ground_truth)
        elif family in ("classical-mimo", "onebit"):
            val = _inst.metric_ber(rep.x_final, inst.ground_truth)
        else:
            if inst.n > _orc.MAX_BRUTE_FORCE_N:
                raise ValueError(f"Gap needs brute force, n={inst.n} is too large")
            _, lowest = _orc.brute_force_binary(inst.oracle())
            val = _inst.metric_gap(rep.objective, lowest)
        return seed, float(val), elapsed, None
    except Exception as err:  # noqa: BLE001 - recorded per trial, sweep continues
        return seed, None, None, f"{type(err).__name__}: {err}"


def _parse_fixed(items):
    out = {}
    for it in items:
        if "=" not in it:
            raise UsageError(f"--fixed expects KEY=VALUE, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def run_bench(family, param, values, trials, fixed, spec, overrides, seed0=0, workers=1):
    """Rows of the sweep table (dicts keyed by :data:`BENCH_COLUMNS`)."""
    metric = _METRICS[family]
    jobs, cells = [], []
    for v in values:
        opts = dict(fixed)
        opts[param] = v
        cells.append(v)
        for t in range(trials):
            jobs.append((family, opts, seed0 + t, spec.to_dict(), overrides))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial, jobs))
    else:
        results = [_trial(j) for j in jobs]
    rows = []
    for ci, v in enumerate(cells):
        chunk = results[ci * trials:(ci + 1) * trials]
        ok = [r for r in chunk if r[3] is None]
        for seed, _, _, msg in chunk:
            if msg is not None:
                print(f"warning: {family} {param}={v:g} seed {seed}: {msg}", file=sys.stderr)
        vals = [r[1] for r in ok]
        times = [r[2] for r in ok]
        if vals:
            best = max(vals) if metric == "Acc" else min(vals)
            med, tmed = _inst.lower_median(vals), _inst.lower_median(times)
        else:
            best = med = tmed = float("nan")
        rows.append({"family": family, "param": param, "value": v, "trial_count": len(ok),
                     "metric_name": metric, "median": med, "best": best, "time_s": tmed})
    return rows


def cmd_bench(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    rows = run_bench(args.family, args.param, args.values, args.trials,
                     _parse_fixed(args.fixed), _spec_from(args), _overrides(args),
                     args.seed0, _workers(args.workers))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def _convex_quadratic(n, seed):
    rng = _inst.substream(seed, "Quadratic", "verify")
    B = rng.standard_normal((n, n))
    return B.T @ B / n, 2.0 * rng.standard_normal(n)


def verify_example2(spec=None):
    spec = spec or SpfSpec.g(0.5, 1.0, 1.0, 1.0, 1.0)
    inst = _inst.example2_instance()
    o = inst.oracle()
    reports = []
    x_bf, f_bf = _orc.brute_force_binary(o)
    rep = solve(o, spec, SolverParams(mu0=4.0, sigma=2.0, eta=1.0), x0=np.zeros(2))
    ok = bool(rep.converged and np.array_equal(rep.x_final, x_bf) and rep.objective == f_bf)
    reports.append(_orc.VerificationReport(
        _orc.Claim.BRUTE_FORCE_OPTIMUM, ok,
        {"n": 2, "mu": 4.0, "sigma": 2.0, "brute_force": x_bf, "brute_force_value": f_bf,
         "solver": rep.x_final, "solver_value": rep.objective, "iterations": rep.iterations}))
    reports.append(_orc.verify_exact_penalty(o, spec, 4.0))
    kkt = kkt_residual(x_bf, o, spec, 4.0)
    ps = is_p_stationary(x_bf, o, spec, 4.0, 0.5)
    reports.append(_orc.VerificationReport(
        _orc.Claim.KKT_BINARY, kkt.satisfied and ps.satisfied,
        {"n": 2, "mu": 4.0, "tau": 0.5, "mu_bar": mu_bar(o, spec), "kkt": kkt.to_dict(),
         "p_stationary": ps.to_dict()}))
    return reports


def verify_descent_suite(n, seeds, spec=None):
    spec = spec or SpfSpec.g(0.5, 2.5, 2.5, 2.0, 2.0)
    out = []
    for seed in range(seeds):
        Q, q = _convex_quadratic(n, seed)
        o = quadratic_oracle(Q, q, precond="matrix")
        sigma = 8.0 * max(spectral_norm(Q), o.lambda_bound)
        params = SolverParams(mu0=0.05 * mu_bar(o, spec) + 1e-3, sigma=sigma, eta=2.0, k0=5,
                              eps_stop=1e-8, max_iter=500)
        r = _orc.verify_descent(o, spec, params)
        r.evidence["seed"] = seed
        out.append(r)
    return out


def verify_linear_rate_suite(n, seeds, spec=None, fractions=(0.05, 0.2, 0.5)):
    spec = spec or SpfSpec.g(0.5, 2.5, 2.5, 2.0, 2.0)
    out = []
    for seed in range(seeds):
        Q, q = _convex_quadratic(n, seed)
        o = quadratic_oracle(Q, q)
        sigma = 8.0 * spectral_norm(Q)
        mb = mu_bar(o, spec)
        for frac in fractions:
            params = SolverParams(mu0=frac * mb, sigma=sigma, eta=2.0, k0=5, eps_stop=1e-10,
                                  max_iter=3000)
            r = _orc.verify_linear_rate(o, spec, params)
            r.evidence.update(seed=seed, mu0_fraction=frac)
            out.append(r)
    return out


def verify_manifest(path, spec=None):
    spec = spec or SpfSpec.g(0.5, 2.5, 2.5, 2.0, 2.0)
    inst = _inst.load_instance(path)
    o = inst.oracle()
    reports = [_orc.finite_diff_check(o, points=3)]
    if inst.n <= _orc.MAX_BRUTE_FORCE_N:
        params = inst.default_params() if inst.kind != "Quadratic" else None
        if params is not None:
            rep = solve(o, spec, params, x0=inst.default_start(), record_trace=False)
            x_bf, f_bf = _orc.brute_force_binary(o)
            reports.append(_orc.VerificationReport(
                _orc.Claim.BRUTE_FORCE_OPTIMUM, bool(rep.objective <= f_bf + 1e-9 * (1 + abs(f_bf))),
                {"n": inst.n, "brute_force_value": f_bf, "solver_value": rep.objective,
                 "gap_percent": _inst.metric_gap(rep.objective, f_bf)}))
    return reports


def cmd_verify(args) -> int:
    spec = _spec_from(args)
    case = args.case
    if case == "example2":
        reports = verify_example2(spec)
    elif case == "example1-negative-control":
        reports = [_orc.verify_negative_control()]
    elif case == "descent-lemma":
        reports = verify_descent_suite(args.n, args.seeds, spec)
    elif case == "linear-rate":
        reports = verify_linear_rate_suite(args.n, args.seeds, spec)
    elif os.path.isfile(case):
        reports = verify_manifest(case, spec)
    else:
        raise UsageError(f"unknown case {case!r}; available: {', '.join(VERIFY_CASES)} "
                         "or a manifest path")
    payload = {"case": case, "passed": all(r.passed for r in reports),
               "reports": [r.to_dict() for r in reports]}
    _emit(json.dumps(payload, sort_keys=True, indent=1) + "\n", args.out)
    return EXIT_OK if payload["passed"] else EXIT_VERIFY


# ---------------------------------------------------------------------------

_COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "bench": cmd_bench,
             "verify": cmd_verify}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
        return _COMMANDS[args.command](args)
    except UsageError as err:
        print(f"shapeak: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
