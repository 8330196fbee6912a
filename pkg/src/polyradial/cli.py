"""Command-line front end: rho-table, solve, verify and sweep.

Option values are resolved as command-line flag, then config file
(``--config``, flat ``key = value`` lines), then built-in default.

Exit codes: 0 success, 1 usage or input error, 2 the solver found no
solution (bracket or convergence failure), 3 verify found a hard failure.
"""
from __future__ import annotations

import argparse
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis, profile_io
from .kinematics import ProfileError, z_values
from .ode_core import DEFAULT_STENCIL, strong_residual, subsolution_values, zdot_values
from .penalty import PenaltyError, PenaltySpec, f_of_d, rho, rho_prime, rho_second
from .solvers import (MESH_RATIO, GradientCheckError, MinimizeConfig, ShootingConfig, SolverError,
                      cross_validate, initial_profile, minimize, minimize_extrapolated,
                      shoot_delayed, shoot_immediate)

__all__ = ["main", "build_parser", "UsageError", "load_config", "solve_profile",
           "EXIT_OK", "EXIT_USAGE", "EXIT_NO_SOLUTION", "EXIT_VERIFY_FAILED"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_SOLUTION = 2
EXIT_VERIFY_FAILED = 3

MODES = ("shoot-immediate", "shoot-delayed", "minimize", "cross")

DEFAULTS = {
    "rho-table": {"gamma": 1.0, "s0": 1.0, "delay": 0.0, "samples": 200, "smin": None, "smax": None},
    "solve": {"mode": "shoot-immediate", "gamma": 1.0, "s0": 1.0, "delay": 0.0, "n": None,
              "ratio": None, "eps0": None, "rtol": 1e-10, "atol": 1e-10, "tol": 1e-10,
              "max_iter": 200, "a_bracket": None, "delta_bracket": None, "alpha": 0.5,
              "stencil": DEFAULT_STENCIL, "diagnostics": False, "no_extrapolate": False},
    "verify": {"alpha": 0.5, "gamma": 1.0, "s0": 1.0, "delay": 0.0, "probe": 0.05,
               "stencil": DEFAULT_STENCIL, "residual_tol": 1e-6},
    "sweep": {"mode": "shoot-immediate", "s0": [1.0], "delay": 0.0, "n": None, "ratio": None,
              "alpha": 0.5, "stencil": DEFAULT_STENCIL, "workers": 1, "no_extrapolate": False},
}
REQUIRED = {"rho-table": (), "solve": ("M",), "verify": ("input",), "sweep": ("M", "gamma")}

# d read back from a CSV must reproduce M r r'/R to this relative accuracy
COLUMN_TOL = 1e-9
TINY = np.finfo(float).tiny


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _flag(parser, name, help):
    parser.add_argument(name, action="store_const", const=True, default=None, help=help)


def _penalty_options(parser, sweep=False):
    if sweep:
        parser.add_argument("--gamma", type=float, nargs="+", help="penalty slopes; 0 means no penalty")
        parser.add_argument("--s0", type=float, nargs="+", help="transition ends")
    else:
        parser.add_argument("--gamma", type=float, help="penalty slope; 0 means no penalty")
        parser.add_argument("--s0", type=float, help="end of the penalty transition")
    parser.add_argument("--delay", type=float, help="start of the penalty transition (delayed penalty)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polyradial", description="Radial solutions of a penalized Dirichlet problem.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("rho-table", help="tabulate the penalty function")
    _penalty_options(p)
    p.add_argument("--samples", type=_positive_int, help="number of intervals; N+1 rows are written")
    p.add_argument("--smin", type=float, help="first sample (default -s0/4)")
    p.add_argument("--smax", type=float, help="last sample (default 2 s0)")
    p.add_argument("--out", help="output CSV (default stdout)")
    p.add_argument("--config", help="flat key = value configuration file")

    p = sub.add_parser("solve", help="compute a radial solution")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--M", type=_positive_int, help="winding number")
    _penalty_options(p)
    p.add_argument("--n", type=_positive_int, help="mesh cells")
    p.add_argument("--ratio", type=float, help="mesh grading ratio")
    p.add_argument("--eps0", type=float, help="shooting seed radius")
    p.add_argument("--rtol", type=float, help="integrator relative tolerance")
    p.add_argument("--atol", type=float, help="integrator scaled absolute tolerance")
    p.add_argument("--tol", type=float, help="minimizer gradient tolerance")
    p.add_argument("--max-iter", type=_positive_int, help="root-finder or minimizer iterations")
    p.add_argument("--a-bracket", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--delta-bracket", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--alpha", type=float, help="Hoelder exponent for the necessary-condition check")
    p.add_argument("--stencil", type=_positive_int, help="differencing stencil width")
    _flag(p, "--diagnostics", "append residual, zdot and subsol columns to the profile")
    _flag(p, "--no-extrapolate", "minimize on one mesh without Richardson extrapolation")
    p.add_argument("--out", help="profile CSV")
    p.add_argument("--out-min", help="minimizer profile CSV (cross mode)")
    p.add_argument("--report", help="report JSON (default stdout)")
    p.add_argument("--config", help="flat key = value configuration file")

    p = sub.add_parser("verify", help="check a stored profile")
    p.add_argument("--in", dest="input", help="profile CSV")
    p.add_argument("--report", help="report JSON (default stdout)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--M", type=_positive_int, help="winding number (default: inferred from d)")
    _penalty_options(p)
    p.add_argument("--probe", type=float)
    p.add_argument("--stencil", type=_positive_int)
    p.add_argument("--residual-tol", type=float)
    p.add_argument("--config", help="flat key = value configuration file")

    p = sub.add_parser("sweep", help="solve over a grid of parameters")
    p.add_argument("--M", type=_positive_int, nargs="+")
    _penalty_options(p, sweep=True)
    p.add_argument("--mode", choices=MODES[:3])
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--stencil", type=_positive_int)
    _flag(p, "--no-extrapolate", "minimize on one mesh without Richardson extrapolation")
    p.add_argument("--workers", type=_positive_int, help="concurrent runs")
    p.add_argument("--profiles-dir", help="write one profile CSV per run here")
    p.add_argument("--out", help="summary CSV (default stdout)")
    p.add_argument("--config", help="flat key = value configuration file")
    return parser


# configuration -------------------------------------------------------------

def load_config(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment.  Keys use - or _."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        out["input" if key == "in" else key] = value
    return out


def _convert(action, text, source):
    if action.const is True and action.nargs == 0:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{source}: {action.dest} expects a boolean, got {text!r}")
    convert = action.type or str
    try:
        if action.nargs in ("+", 2):
            values = [convert(v) for v in text.replace(",", " ").split()]
            if action.nargs == 2 and len(values) != 2:
                raise ValueError
            return values
        value = convert(text)
    except (ValueError, argparse.ArgumentTypeError):
        raise UsageError(f"{source}: invalid value {text!r} for {action.dest}") from None
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"{source}: {action.dest} must be one of {', '.join(action.choices)}")
    return value


def resolve(parser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    config = load_config(args.config) if args.config else {}
    for key in config:
        if key not in actions:
            raise UsageError(f"{args.config}: unknown key {key!r}")
    defaults = DEFAULTS[args.command]
    for dest, action in actions.items():
        if getattr(args, dest) is not None:
            continue
        if dest in config:
            setattr(args, dest, _convert(action, config[dest], args.config))
        else:
            setattr(args, dest, defaults.get(dest))
    for dest in REQUIRED[args.command]:
        if getattr(args, dest) in (None, []):
            flag = actions[dest].option_strings[0]
            raise UsageError(f"the following arguments are required: {flag}")
    return args


def _spec(gamma, s0, delay) -> PenaltySpec:
    try:
        return PenaltySpec.from_options(gamma, s0, delay or None)
    except PenaltyError as exc:
        raise UsageError(str(exc)) from None


# solving -------------------------------------------------------------------

def _shoot_cfg(M, opts, branch="immediate"):
    kw = {k: opts[k] for k in ("n", "ratio", "eps0", "rtol", "atol", "max_iter",
                               "a_bracket", "delta_bracket") if opts.get(k) is not None}
    try:
        return ShootingConfig(M, branch=branch, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _min_cfg(M, opts):
    kw = {k: opts[k] for k in ("n", "ratio", "tol", "max_iter", "stencil") if opts.get(k) is not None}
    try:
        return MinimizeConfig(M, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _shot_info(result) -> dict:
    return {"parameter": result.parameter, "miss": result.miss, "route": result.route,
            "roots": list(result.roots), "monotone": result.monotone,
            "evaluations": result.evaluations}


def _converged(*profiles):
    return all(p.meta.get("status", "converged") == "converged" for p in profiles)


def solve_profile(spec: PenaltySpec, mode: str, M: int, opts: dict):
    """Run one solver mode.

    Returns (profile, info, extra) where ``info`` is a flat dict of solver
    facts and ``extra`` holds mode-specific objects.  Raises SolverError when
    the method finds nothing.
    """
    if mode == "shoot-immediate":
        res = shoot_immediate(spec, _shoot_cfg(M, opts))
        return res.profile, _shot_info(res), {}
    if mode == "shoot-delayed":
        res = shoot_delayed(spec, _shoot_cfg(M, opts, "delayed"))
        return res.profile, _shot_info(res), {}
    if mode == "minimize":
        cfg = _min_cfg(M, opts)
        init = initial_profile(M, cfg.mesh())
        if opts.get("no_extrapolate"):
            prof = minimize(spec, cfg, init)
            parts = (prof,)
        else:
            rich = minimize_extrapolated(spec, cfg, init)
            prof, parts = rich.profile, (rich.coarse, rich.fine)
        info = {k: v for k, v in sorted(prof.meta.items())}
        if not _converged(*parts):
            raise SolverError("minimizer did not converge: "
                              + ", ".join(p.meta.get("status", "?") for p in parts))
        return prof, info, {}
    if mode == "cross":
        # both solvers run on one mesh, graded for the minimizer
        opts = dict(opts, n=opts.get("n") or MinimizeConfig.n, ratio=opts.get("ratio") or MESH_RATIO)
        cv = cross_validate(spec, M, opts["n"], _shoot_cfg(M, opts), _min_cfg(M, opts))
        if not _converged(cv.minimization.coarse, cv.minimization.fine):
            raise SolverError("minimizer did not converge")
        return cv.shooting.profile, _shot_info(cv.shooting), {"cross": cv}
    raise UsageError(f"unknown mode {mode!r}")


def _diagnostics(spec, profile, stencil):
    M = profile.M
    pos = profile.positive
    zd = np.full(profile.mesh.shape, np.nan)
    zd[pos] = zdot_values(M, profile.mesh[pos], profile.r[pos], profile.rdot[pos])[0]
    out = {"residual": strong_residual(spec, M, profile, stencil), "zdot": zd}
    out["subsol"] = (subsolution_values(spec, M, profile, stencil)[0] if M >= 2
                     else np.full(profile.mesh.shape, np.nan))
    return out


def _rdot_consistency(profile) -> float:
    # trapezoid integral of r' over each cell against the jump in r
    R, r, rd = profile.mesh, profile.r, profile.rdot
    jump = np.diff(r) - 0.5 * np.diff(R) * (rd[1:] + rd[:-1])
    return float(np.max(np.abs(jump)))


def _prefixed(prefix, d):
    return {f"{prefix}.{k}": v for k, v in d.items()}


def _write_profile(path, spec, profile, stencil, diagnostics):
    diag = _diagnostics(spec, profile, stencil) if diagnostics else None
    profile_io.write_profile_csv(path, spec, profile, diag)


def run_solve(args) -> int:
    spec = _spec(args.gamma, args.s0, args.delay)
    opts = vars(args)
    try:
        profile, info, extra = solve_profile(spec, args.mode, args.M, opts)
    except GradientCheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    doc = {"mode": args.mode}
    doc.update(_prefixed("solver", info))
    doc["consistency.rdot_integral"] = _rdot_consistency(profile)
    if "cross" in extra:
        cv = extra["cross"]
        doc.update(_prefixed("cross", cv.summary()))
        doc.update(_prefixed("shooting", cv.shooting_report.to_dict()))
        doc.update(_prefixed("minimization", cv.minimization_report.to_dict()))
        if args.out_min:
            _write_profile(args.out_min, spec, cv.minimization.profile, args.stencil, args.diagnostics)
    else:
        report = analysis.full_report(spec, profile, alpha=args.alpha, stencil=args.stencil)
        doc.update(report.to_dict())
    if args.out:
        _write_profile(args.out, spec, profile, args.stencil, args.diagnostics)
    text = profile_io.write_json(args.report, doc)
    if text is not None:
        sys.stdout.write(text)
    return EXIT_OK


# verify --------------------------------------------------------------------

def infer_M(table) -> int:
    R, r, rd, d = table["R"], table["r"], table["rdot"], table["d"]
    ok = (R > 0) & (r * rd > 0) & np.isfinite(d)
    if not np.any(ok):
        raise UsageError("cannot infer M: no row with R > 0 and r r' > 0")
    M = int(round(float(np.median(d[ok] * R[ok] / (r[ok] * rd[ok])))))
    if M < 1:
        raise UsageError("cannot infer M from the d column")
    return M


def column_checks(spec, table, profile) -> dict:
    pos = profile.positive
    R = profile.mesh
    out = {}
    d_expect = profile.det()
    err = np.abs(table["d"] - d_expect) / np.maximum(np.abs(d_expect), TINY)
    err = np.where(pos & np.isfinite(err), err, np.where(pos, np.inf, 0.0))
    out["columns.d"] = _column_verdict(err, R, COLUMN_TOL)
    z_expect = z_values(spec, profile)
    zerr = np.abs(table["z"] - z_expect) / np.maximum(np.abs(z_expect), TINY)
    zerr = np.where(pos & np.isfinite(zerr), zerr, np.where(pos, np.inf, 0.0))
    # z depends on the penalty flags, which the file does not record: soft
    out["columns.z"] = _column_verdict(zerr, R, COLUMN_TOL, soft=True)
    return out


def _column_verdict(err, R, tol, soft=False):
    i = int(np.argmax(err))
    status = "pass" if err[i] <= tol else ("flagged" if soft else "fail")
    return {"status": status, "worst_R": float(R[i]), "worst_value": float(err[i])}


def run_verify(args) -> int:
    spec = _spec(args.gamma, args.s0, args.delay)
    try:
        table = profile_io.read_profile_csv(args.input)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
    except profile_io.CsvFormatError as exc:
        raise UsageError(str(exc)) from None
    M = args.M or infer_M(table)
    try:
        profile = table.to_profile(M)
    except ProfileError as exc:
        raise UsageError(f"{args.input}: {exc}") from None
    report = analysis.full_report(spec, profile, alpha=args.alpha, probe=args.probe,
                                  stencil=args.stencil, residual_tol=args.residual_tol)
    doc = report.to_dict()
    cols = column_checks(spec, table, profile)
    for name, verdict in cols.items():
        for key, value in verdict.items():
            doc[f"{name}.{key}"] = value
    doc["consistency.rdot_integral"] = _rdot_consistency(profile)
    hard_ok = report.passed and cols["columns.d"]["status"] == "pass"
    doc["verify.passed"] = hard_ok
    text = profile_io.write_json(args.report, doc)
    if text is not None:
        sys.stdout.write(text)
    if not hard_ok:
        failed = report.failures() + [k for k, v in cols.items() if v["status"] == "fail"]
        print(f"verify: hard check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


# rho-table -----------------------------------------------------------------

def run_rho_table(args) -> int:
    spec = _spec(args.gamma, args.s0, args.delay)
    smin = -0.25 * args.s0 if args.smin is None else args.smin
    smax = 2.0 * args.s0 if args.smax is None else args.smax
    if not smax > smin:
        raise UsageError("smax must exceed smin")
    s = np.linspace(smin, smax, args.samples + 1)
    cols = [s, rho(spec, s), rho_prime(spec, s), rho_second(spec, s), f_of_d(spec, s)]
    rows = [[profile_io.format_float(c[i]) for c in cols] for i in range(s.size)]
    text = profile_io.write_rows_csv(args.out, ["s", "rho", "rho_prime", "rho_second", "f"], rows)
    if text is not None:
        sys.stdout.write(text)
    return EXIT_OK


# sweep ---------------------------------------------------------------------

SWEEP_COLUMNS = ("M", "gamma", "s0", "delay", "mode", "status", "classification", "delta", "a",
                 "D_M", "energy", "residual_sup", "passed", "failures", "message")


def _profile_name(M, gamma, s0):
    return f"profile_M{M}_gamma{gamma!r}_s0{s0!r}.csv"


def sweep_row(job: dict) -> dict:
    """One sweep run; never raises, failures become the row's status."""
    row = {k: job.get(k) for k in ("M", "gamma", "s0", "delay", "mode")}
    row.update(status="ok", classification=None, delta=None, a=None, D_M=None, energy=None,
               residual_sup=None, passed=None, failures="", message="")
    try:
        spec = _spec(job["gamma"], job["s0"], job["delay"])
        profile, _, _ = solve_profile(spec, job["mode"], job["M"], job)
        report = analysis.full_report(spec, profile, alpha=job["alpha"], stencil=job["stencil"])
    except UsageError as exc:
        row.update(status="invalid", message=str(exc))
        return row
    except SolverError as exc:
        row.update(status="no-solution", message=str(exc))
        return row
    except Exception as exc:  # one bad row must not stop the sweep
        row.update(status="error", message=f"{type(exc).__name__}: {exc}")
        return row
    c = report.classification
    row.update(classification=c.kind, delta=c.delta, a=c.a, D_M=report.D_M,
               energy=report.energy.total, residual_sup=report.residual_sup,
               passed=report.passed, failures=" ".join(report.failures()))
    if job.get("profiles_dir"):
        path = os.path.join(job["profiles_dir"], _profile_name(job["M"], job["gamma"], job["s0"]))
        profile_io.write_profile_csv(path, spec, profile)
    return row


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return profile_io.format_float(value)
    return str(value)


def run_sweep(args) -> int:
    if args.profiles_dir:
        os.makedirs(args.profiles_dir, exist_ok=True)
    base = {k: getattr(args, k) for k in ("mode", "delay", "n", "ratio", "alpha", "stencil",
                                          "no_extrapolate", "profiles_dir")}
    jobs = [dict(base, M=M, gamma=g, s0=s0)
            for M, g, s0 in itertools.product(args.M, args.gamma, args.s0)]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(sweep_row, jobs))
    else:
        rows = [sweep_row(job) for job in jobs]
    table = [[_cell(row[c]) for c in SWEEP_COLUMNS] for row in rows]
    text = profile_io.write_rows_csv(args.out, list(SWEEP_COLUMNS), table)
    if text is not None:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"rho-table": run_rho_table, "solve": run_solve, "verify": run_verify, "sweep": run_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = resolve(parser, argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"polyradial: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"polyradial: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
