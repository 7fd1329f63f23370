"""Command-line front end.

Subcommands: ``threshold``, ``amplification``, ``simulate`` and
``experiment``.  Exit codes: 0 success, 1 usage/parse/I-O error,
2 a stability hypothesis fails.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import stability as st
from .config import ConfigError, load_config
from .core import LinearTestParams, derive_path_stream
from .montecarlo import (AllPathsOverflowed, InsufficientData, estimate_second_moments,
                         fit_decay_rate)
from .plotting import exponential_curve, plot_moments
from .problems import BUILTINS, LINEAR_PARAMS, NONLINEAR_CONSTANTS, builtin_name
from .schemes import NonConvergence, Scheme, simulate_path

DEFAULT_SEED = 20170714
DEFAULT_SCHEMES = "NCTS,STS,BE,SSBE"

EXIT_OK, EXIT_USAGE, EXIT_HYPOTHESIS = 0, 1, 2

log = logging.getLogger("tamedjump")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    """17 significant digits, locale independent."""
    return format(float(x), ".17g")


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not values or any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError("step sizes must be positive")
    return values


def _scheme_list(text: str) -> list[Scheme]:
    try:
        return [Scheme.parse(s.strip()) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _preset(text: str) -> str:
    name = builtin_name(text)
    if name is None:
        raise argparse.ArgumentTypeError(f"unknown preset {text!r}; choose from "
                                         + ", ".join(BUILTINS))
    return name


# ---------------------------------------------------------------- threshold

LINEAR_FLAGS = ("a", "b", "c", "lam")
NONLINEAR_FLAGS = {
    "sts-nonlinear": ("rho", "K", "beta", "beta_bar", "theta", "C", "lam"),
    "ncts-nonlinear": ("K", "beta", "beta_bar", "theta", "C", "mu", "lam"),
}


def _linear_params(args) -> LinearTestParams:
    if args.preset == "linear-test":
        base = {k: getattr(LINEAR_PARAMS, k) for k in LINEAR_FLAGS}
    elif args.preset is not None:
        raise UsageError(f"preset {args.preset} has no linear test parameters")
    else:
        base = {}
    for k in LINEAR_FLAGS:
        if getattr(args, k) is not None:
            base[k] = getattr(args, k)
    missing = [k for k in LINEAR_FLAGS if k not in base]
    if missing:
        raise UsageError("missing " + ", ".join("--" + ("lambda" if k == "lam" else k) for k in missing))
    return LinearTestParams(**base)


def _nonlinear_constants(args) -> st.NonlinearConstants:
    fields = ("rho", "K", "beta", "beta_bar", "a_exp", "theta", "C", "mu", "lam")
    if args.preset == "cubic-drift":
        base = {k: getattr(NONLINEAR_CONSTANTS, k) for k in fields}
    elif args.preset is not None:
        raise UsageError(f"preset {args.preset} has no nonlinear constants")
    else:
        base = {"a_exp": 3.0}
    for k in fields:
        if getattr(args, k) is not None:
            base[k] = getattr(args, k)
    missing = [k for k in NONLINEAR_FLAGS[args.kind] if k not in base]
    if missing:
        raise UsageError("missing " + ", ".join(
            "--" + {"lam": "lambda", "beta_bar": "beta-bar"}.get(k, k) for k in missing))
    for k in fields:
        base.setdefault(k, 0.0)
    return st.NonlinearConstants(**base)


def _print_verdict(v: st.StabilityVerdict, out):
    print(f"case: {v.case_label}", file=out)
    print(f"indicator = {v.indicator:.10g}", file=out)
    for name, ok in v.hypotheses:
        print(f"hypothesis {name}: {'pass' if ok else 'FAILED'}", file=out)
    for name, ok in v.conditions:
        print(f"  condition {name}: {'yes' if ok else 'no'}", file=out)
    for name, value in v.bounds.items():
        note = "" if v.certified else " (informational)"
        print(f"bound {name} = {value:.10g}{note}", file=out)
    if v.certified:
        print(f"threshold = {v.threshold:.10g}", file=out)
    else:
        print("threshold = none", file=out)


def cmd_threshold(args, out=sys.stdout) -> int:
    kind = args.kind
    try:
        if kind in ("sts-linear", "ncts-linear", "exact-linear"):
            p = _linear_params(args)
            if kind == "exact-linear":
                l = st.linear_indicator(p)
                print(f"indicator l = {l:.10g}", file=out)
                print(f"exact solution mean-square stable: {'yes' if l < 0 else 'no'}", file=out)
                return EXIT_OK
            if kind == "sts-linear":
                verdict = st.sts_linear_threshold(p)
            else:
                if args.dt is None:
                    raise UsageError("ncts-linear needs --dt")
                verdict = st.ncts_linear_verdict(p, args.dt)
        elif kind == "exact-nonlinear":
            names = ("mu_f", "sigma", "gamma_h", "lam")
            preset = BUILTINS[args.preset].exact if args.preset else None
            if args.preset and preset is None:
                raise UsageError(f"preset {args.preset} has no exact-solution constants")
            vals = {f: getattr(args, f) if getattr(args, f) is not None
                    else (getattr(preset, f) if preset else None) for f in names}
            missing = [f for f in names if vals[f] is None]
            if missing:
                raise UsageError("missing " + ", ".join(
                    "--" + ("lambda" if f == "lam" else f.replace("_", "-")) for f in missing))
            c = st.ExactSolutionConstants(**vals)
            alpha = st.exact_nonlinear_alpha(c)
            print(f"alpha = {alpha:.10g}", file=out)
            print(f"exact solution exponentially mean-square stable: {'yes' if alpha < 0 else 'no'}",
                  file=out)
            return EXIT_OK
        else:
            k = _nonlinear_constants(args)
            fn = st.sts_nonlinear_threshold if kind == "sts-nonlinear" else st.ncts_nonlinear_threshold
            verdict = fn(k)
    except st.HypothesisFailed as exc:
        _print_verdict(exc.verdict, out)
        for name in exc.verdict.failed:
            print(f"hypothesis {name} failed", file=out)
        return EXIT_HYPOTHESIS
    _print_verdict(verdict, out)
    return EXIT_OK


# ------------------------------------------------------------ amplification

def cmd_amplification(args, out=sys.stdout) -> int:
    p = _linear_params(args)
    l = st.linear_indicator(p)
    print(f"# l = {l:.10g}", file=out)
    print("dt,R,rate,stable", file=out)
    for dt in args.dt:
        r = st.sts_linear_amplification(p, dt)
        rate = -math.log(r) / dt if r > 0 else float("nan")
        print(f"{fmt(dt)},{fmt(r)},{fmt(rate)},{int(r < 1)}", file=out)
    return EXIT_OK


# ----------------------------------------------------------------- problems

def resolve_problem(selector: str):
    """Builtin name or path to a problem file -> (ProblemConfig, Builtin or None)."""
    name = builtin_name(selector)
    if name is not None:
        b = BUILTINS[name]
        return b.config, b
    try:
        return load_config(selector), None
    except OSError as exc:
        raise UsageError(f"cannot read problem file {selector!r}: {exc.strerror}") from None


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_simulate(args, out=sys.stdout) -> int:
    config, _ = resolve_problem(args.problem)
    if args.dump_config:
        out.write(config.dump())
        return EXIT_OK
    if args.out is None or args.dt is None:
        raise UsageError("simulate needs --dt and --out")
    problem = config.to_problem()
    scheme = Scheme.parse(args.scheme)
    n_steps = args.steps if args.steps is not None else int(round(problem.horizon / args.dt))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["step", "time"] + [f"x{i + 1}" for i in range(problem.dim)]
    written = []
    for i in range(args.paths):
        traj = simulate_path(problem, scheme, args.dt, n_steps, derive_path_stream(args.seed, i))
        if traj.overflowed:
            log.warning("path %d overflowed at step %d; trajectory truncated", i, traj.overflow_step)
        path = out_dir / f"trajectory_{scheme.value}_dt{args.dt:g}_path{i:05d}.csv"
        _write_csv(path, header, ([n, fmt(t)] + [fmt(v) for v in x]
                                  for n, (t, x) in enumerate(zip(traj.times, traj.states))))
        written.append(path)
    for path in written:
        print(path, file=out)
    return EXIT_OK


# --------------------------------------------------------------- experiment

SUMMARY_HEADER = ["scheme", "dt", "n_steps", "n_paths", "seed", "final_msq", "final_stderr",
                  "overflowed", "fit_rate", "fit_intercept", "fit_residual", "fit_first",
                  "fit_last", "theory_threshold", "theory_status", "theory_bounds"]


def theory_for(builtin, scheme: Scheme, dt: float):
    """(threshold, status, bounds) from the closed-form results that cover this case."""
    if builtin is None:
        return None, "n/a", {}
    try:
        if builtin.linear is not None and scheme is Scheme.STS:
            v = st.sts_linear_threshold(builtin.linear)
        elif builtin.linear is not None and scheme is Scheme.NCTS:
            v = st.ncts_linear_verdict(builtin.linear, dt)
            if not v.certified:
                return None, "not certified at this dt", v.bounds
        elif builtin.nonlinear is not None and scheme is Scheme.STS:
            v = st.sts_nonlinear_threshold(builtin.nonlinear)
        elif builtin.nonlinear is not None and scheme is Scheme.NCTS:
            v = st.ncts_nonlinear_threshold(builtin.nonlinear)
        else:
            return None, "n/a", {}
    except st.HypothesisFailed as exc:
        return None, "hypothesis failed: " + "; ".join(exc.verdict.failed), exc.verdict.bounds
    status = "certified" if dt < v.threshold else "dt above threshold"
    return v.threshold, status, v.bounds


def _reference_curve(builtin, horizon):
    if builtin is None:
        return None
    t = np.linspace(0.0, horizon, 201)
    if builtin.linear is not None:
        return (*exponential_curve(t, st.linear_indicator(builtin.linear)), "exact solution")
    if builtin.exact is not None:
        return (*exponential_curve(t, st.exact_nonlinear_alpha(builtin.exact)), "exact-solution bound")
    return None


def cmd_experiment(args, out=sys.stdout) -> int:
    config, builtin = resolve_problem(args.problem)
    if args.dump_config:
        out.write(config.dump())
        return EXIT_OK
    if args.out is None:
        raise UsageError("experiment needs --out")
    dts = args.dt or (list(builtin.dts) if builtin else None)
    if not dts:
        raise UsageError("--dt is required for problem files")
    n_paths = args.paths or (builtin.n_paths if builtin else 1000)
    if n_paths < 2:
        raise UsageError("--paths must be at least 2")
    schemes = args.schemes
    problem = config.to_problem()
    if Scheme.STS in schemes and not problem.is_split:
        raise UsageError("STS needs drift_u and drift_v in the problem file")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        summary = []
        reference = _reference_curve(builtin, problem.horizon)
        for scheme in schemes:
            series_list = []
            for dt in dts:
                n_steps = args.steps if args.steps is not None else int(round(problem.horizon / dt))
                series = estimate_second_moments(problem, scheme, dt, n_steps, n_paths,
                                                 args.seed, threads=args.threads)
                series_list.append(series)
                path = out_dir / f"moments_{scheme.value}_dt{dt:g}.csv"
                written.append(path)
                _write_csv(path, ["step", "time", "msq", "stderr", "overflowed"],
                           ([int(n), fmt(t), fmt(m), fmt(s), int(o)] for n, t, m, s, o in zip(
                               series.steps, series.times, series.msq, series.stderr,
                               series.overflowed)))
                try:
                    fit = fit_decay_rate(series)
                    fit_cols = [fmt(fit.rate), fmt(fit.intercept), fmt(fit.residual),
                                fit.window[0], fit.window[1]]
                except InsufficientData:
                    fit_cols = ["", "", "", "", ""]
                thr, status, bounds = theory_for(builtin, scheme, dt)
                summary.append([scheme.value, fmt(dt), n_steps, n_paths, args.seed,
                                fmt(series.msq[-1]), fmt(series.stderr[-1]),
                                series.overflow_count, *fit_cols,
                                "" if thr is None else fmt(thr), status,
                                ";".join(f"{k}={fmt(v)}" for k, v in bounds.items())])
            svg = out_dir / f"moments_{scheme.value}.svg"
            written.append(svg)
            plot_moments(series_list, svg, title=f"{scheme.value}: {config.name or args.problem}",
                         reference=reference)
        path = out_dir / "summary.csv"
        written.append(path)
        _write_csv(path, SUMMARY_HEADER, summary)
    except BaseException:
        for path in written:
            if path.exists():
                path.unlink()
        raise
    for path in written:
        print(path, file=out)
    return EXIT_OK


# ------------------------------------------------------------------- parser

def _add_linear_flags(p):
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--lambda", dest="lam", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tamedjump", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    th = sub.add_parser("threshold", help="closed-form stability thresholds")
    th.add_argument("kind", choices=["sts-linear", "ncts-linear", "exact-linear",
                                     "sts-nonlinear", "ncts-nonlinear", "exact-nonlinear"])
    th.add_argument("--preset", type=_preset, help=", ".join(BUILTINS))
    _add_linear_flags(th)
    th.add_argument("--dt", type=float)
    for name in ("rho", "K", "beta", "theta", "C", "mu"):
        th.add_argument(f"--{name}", type=float)
    th.add_argument("--beta-bar", dest="beta_bar", type=float)
    th.add_argument("--a-exp", dest="a_exp", type=float)
    th.add_argument("--mu-f", dest="mu_f", type=float)
    th.add_argument("--sigma", type=float)
    th.add_argument("--gamma-h", dest="gamma_h", type=float)
    th.set_defaults(func=cmd_threshold)

    am = sub.add_parser("amplification", help="second-moment multiplier R(dt) of STS, linear case")
    am.add_argument("--preset", type=_preset, help="linear-test")
    _add_linear_flags(am)
    am.add_argument("--dt", type=_float_list, default=[0.2, 0.1, 0.08, 0.05, 0.02, 0.01, 0.005])
    am.set_defaults(func=cmd_amplification)

    for name, func in (("simulate", cmd_simulate), ("experiment", cmd_experiment)):
        p = sub.add_parser(name)
        p.add_argument("--problem", default="linear-test",
                       help="builtin name (%s) or path to a problem file" % ", ".join(BUILTINS))
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--steps", type=int)
        p.add_argument("--dump-config", action="store_true",
                       help="print the problem file and exit")
        p.set_defaults(func=func)
        if name == "simulate":
            p.add_argument("--scheme", type=Scheme.parse, default=Scheme.STS)
            p.add_argument("--dt", type=float)
            p.add_argument("--paths", type=int, default=1)
        else:
            p.add_argument("--schemes", type=_scheme_list, default=_scheme_list(DEFAULT_SCHEMES))
            p.add_argument("--dt", type=_float_list)
            p.add_argument("--paths", type=int)
            p.add_argument("--threads", type=int, default=1,
                           help="worker threads (speed only; output is identical)")
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args, out=out)
    except (UsageError, ConfigError, ValueError, OSError) as exc:
        print(f"tamedjump: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AllPathsOverflowed, NonConvergence) as exc:
        print(f"tamedjump: simulation failed: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
