"""Command-line interface: ``brrr fit | simulate | bench``.

Data goes to the files named by ``--out``; progress goes to stderr. On failure
a single line ``brrr: error[CODE]: message`` is written to stderr and the exit
status is non-zero.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import experiments as ex
from .baselines import cv_select_rank, rrr_fit
from .numerics import (
    CsvParseError,
    NumericalError,
    format_float,
    make_rng,
    read_csv_matrix,
    write_csv_matrix,
    write_csv_rows,
)
from .posterior import DimensionError, RegressionData
from .samplers import GibbsConfig, SamplerConfig, TransienceError, run_chain_timed

log = logging.getLogger("brrr")


class CliError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _method_list(text: str) -> list[str]:
    methods = [v.strip().lower() for v in text.split(",") if v.strip()]
    bad = [v for v in methods if v not in ex.METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {','.join(ex.METHODS)}")
    return methods


def _positive(cast):
    def parse(text):
        v = cast(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    parse.__name__ = cast.__name__
    return parse


def _non_negative_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="plain-text file of 'key = value' defaults; flags take precedence")
    p.add_argument("--seed", type=_non_negative_int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=_positive(int), default=os.cpu_count() or 1)
    p.add_argument("--quiet", action="store_true", help="no progress on stderr")


def _add_chain_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--h", type=_positive(float), help="Langevin step size")
    p.add_argument("--lambda", dest="lam", type=_positive(float), default=3.0)
    p.add_argument("--t", dest="T", type=_positive(int), default=200)
    p.add_argument("--burn-in", type=_non_negative_int, default=100)
    p.add_argument("--k", type=_positive(int), help="Gibbs factor rank (default min(p, m, 20))")
    p.add_argument("--tau", type=_positive(float), default=1.0)
    p.add_argument("--delta", type=float, default=0.1, help="relative singular-value threshold for Rank")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brrr", description="Bayesian reduced-rank regression by Langevin Monte Carlo")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one estimator on CSV data")
    _add_common(fit)
    fit.add_argument("--x", required=True)
    fit.add_argument("--y", required=True)
    fit.add_argument("--x-test")
    fit.add_argument("--y-test")
    fit.add_argument("--b-true")
    fit.add_argument("--sampler", choices=ex.METHODS, default="mala")
    fit.add_argument("--sigma2", type=_positive(float), default=1.0)
    fit.add_argument("--rank", type=_non_negative_int, help="fixed RRR rank (default: 10-fold CV)")
    fit.add_argument("--resplits", type=_positive(int),
                     help="repeat random train/test splits and write an MSPE/rank summary instead of B")
    fit.add_argument("--n-test", type=_positive(int), default=10)
    fit.add_argument("--methods", type=_method_list, default=["lmc", "mala", "rrr"],
                     help="methods for --resplits")
    _add_chain_options(fit)

    sim = sub.add_parser("simulate", help="replicate a simulation scenario")
    _add_common(sim)
    sim.add_argument("--scenario", choices=("I", "II", "III"), required=True)
    sim.add_argument("--rho", type=float, default=0.0)
    sim.add_argument("--reps", type=_positive(int), default=100)
    sim.add_argument("--methods", type=_method_list, default=list(ex.METHODS))
    sim.add_argument("--sigma2", type=_positive(float), default=1.0)
    _add_chain_options(sim)

    bench = sub.add_parser("bench", help="time a fixed number of iterations as p varies")
    _add_common(bench)
    bench.add_argument("--p", type=_int_list, default=[10, 50, 100, 150])
    bench.add_argument("--methods", type=_method_list, default=list(ex.METHODS))
    bench.add_argument("--iters", type=_positive(int), default=10)
    bench.add_argument("--n", type=_positive(int), default=100)
    bench.add_argument("--m", type=_positive(int), default=90)
    bench.add_argument("--r", type=_positive(int), default=2)
    bench.add_argument("--repeats", type=_positive(int), default=3)
    bench.add_argument("--lambda", dest="lam", type=_positive(float), default=3.0)
    return parser


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CliError("E_IO", f"cannot read config {path}: {exc.strerror}") from None
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError("E_CONFIG", f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("_", "-").lstrip("-")] = value
    return out


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config_file(args.config)
        # config values are spliced in ahead of the command-line flags, so flags win
        extra = []
        for key, value in cfg.items():
            extra += [f"--{key}", value]
        args = parser.parse_args([argv[0], *extra, *argv[1:]])
    if hasattr(args, "delta") and not 0 < args.delta < 1:
        parser.error("--delta must lie in (0, 1)")
    if hasattr(args, "burn_in") and args.burn_in >= args.T:
        parser.error("--burn-in must be smaller than --t")
    return args


def _progress(args):
    def report(msg):
        if not args.quiet:
            print(msg, file=sys.stderr, flush=True)
    return report


def _settings(args, h=None) -> ex.MethodSettings:
    return ex.MethodSettings(h=h, lam=args.lam, T=args.T, burn_in=args.burn_in, delta=args.delta,
                             gibbs_k=args.k, gibbs_tau=args.tau)


def _read(path: str, what: str) -> np.ndarray:
    try:
        return read_csv_matrix(path)
    except OSError as exc:
        raise CliError("E_IO", f"cannot read {what} file {path}: {exc.strerror}") from None


def cmd_fit(args) -> int:
    say = _progress(args)
    X, Y = _read(args.x, "X"), _read(args.y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise CliError("E_DIM", f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")

    if args.resplits:
        report = ex.split_protocol(
            X, Y, args.methods, n_test=args.n_test, resplits=args.resplits, seed=args.seed,
            settings=_settings(args, args.h), sigma2=args.sigma2,
            progress=lambda i: say(f"resplit {i + 1}/{args.resplits}"),
        )
        write_csv_rows(args.out, ["method", "metric", "mean", "sd"], report.rows())
        return 0

    data = RegressionData(X, Y, args.sigma2)
    rng = make_rng(args.seed)
    if args.sampler == "rrr":
        if args.rank is not None:
            if args.rank > min(data.p, data.m):
                raise CliError("E_CONFIG", f"--rank {args.rank} exceeds min(p, m) = {min(data.p, data.m)}")
            B = rrr_fit(X, Y, args.rank)
        else:
            B = cv_select_rank(X, Y, rng=rng).coefficients
    elif args.sampler == "gibbs":
        cfg = GibbsConfig(k=args.k, tau=args.tau, T=args.T, burn_in=args.burn_in)
        out = run_chain_timed("gibbs", data, cfg, rng)
        B = out.estimate
        say(f"gibbs: {out.wall_time_seconds:.3f}s")
    else:
        h = args.h if args.h is not None else ex.auto_step_size(X, args.sigma2, args.lam, data.m)
        cfg = SamplerConfig(h=h, T=args.T, burn_in=args.burn_in, lam=args.lam)
        out = run_chain_timed(args.sampler, data, cfg, rng)
        B = out.estimate
        say(f"{args.sampler}: h={h:.4g} acceptance={out.acceptance_rate:.3f} {out.wall_time_seconds:.3f}s")
    write_csv_matrix(args.out, B)

    metrics = {"rank": ex.estimate_rank(B, args.delta)}
    if args.x_test or args.y_test:
        if not (args.x_test and args.y_test):
            raise CliError("E_CONFIG", "--x-test and --y-test must be given together")
        Xt, Yt = _read(args.x_test, "X test"), _read(args.y_test, "Y test")
        if Xt.shape[1] != data.p or Yt.shape != (Xt.shape[0], data.m):
            raise CliError("E_DIM", f"test data shapes {Xt.shape}, {Yt.shape} do not match p={data.p}, m={data.m}")
        metrics["mspe"] = float(np.sum((Yt - Xt @ B) ** 2) / Yt.size)
    if args.b_true:
        Bt = _read(args.b_true, "B true")
        if Bt.shape != B.shape:
            raise CliError("E_DIM", f"--b-true has shape {Bt.shape}, expected {B.shape}")
        err = float(np.sum((Bt - B) ** 2))
        metrics["est"] = err / B.size
        norm = float(np.sum(Bt ** 2))
        if norm > 0:
            metrics["nmse"] = err / norm
    for key, value in metrics.items():
        print(f"{key},{format_float(value) if isinstance(value, float) else value}")
    return 0


def cmd_simulate(args) -> int:
    say = _progress(args)
    sc = ex.scenario(args.scenario, rho_x=args.rho, sigma2=args.sigma2)
    report = ex.run_replications(
        sc, args.methods, args.reps, base_seed=args.seed, settings=_settings(args, args.h),
        jobs=args.jobs, progress=lambda r: say(f"replication {r.index + 1}/{args.reps} done"),
    )
    write_csv_rows(args.out, ["method", "metric", "mean", "sd"], report.rows())
    for mth in report.methods:
        say(f"{mth}: mean acceptance {report.acceptance[mth]:.3f}, diverged {report.n_divergent[mth]}")
    return 0


def cmd_bench(args) -> int:
    say = _progress(args)
    rows = ex.runtime_bench(
        args.p, n=args.n, m=args.m, r=args.r, iters=args.iters, methods=args.methods,
        base_seed=args.seed, repeats=args.repeats, lam=args.lam,
        progress=lambda row: say(f"{row.method} p={row.p}: {row.seconds:.4f}s"),
    )
    write_csv_rows(args.out, ["method", "p", "seconds"], rows)
    return 0


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="brrr: %(message)s")
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except CsvParseError as exc:
        code, msg = "E_PARSE", str(exc)
    except DimensionError as exc:
        code, msg = "E_DIM", str(exc)
    except TransienceError as exc:
        code, msg = "E_DIVERGED", str(exc)
    except NumericalError as exc:
        code, msg = "E_NUMERIC", str(exc)
    except ex.ExperimentError as exc:
        code, msg = "E_DIVERGED", str(exc)
    except ValueError as exc:
        code, msg = "E_CONFIG", str(exc)
    except OSError as exc:
        code, msg = "E_IO", f"{exc.filename}: {exc.strerror}"
    print(f"brrr: error[{code}]: {' '.join(msg.split())}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
