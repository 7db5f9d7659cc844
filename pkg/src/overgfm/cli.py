"""``overgfm`` command line: simulate, fit, select-q, evaluate, benchmark.

Exit codes: 0 success, 2 usage error, 3 data error, 4 fit stopped at
``--max-iter`` without meeting the ELBO tolerance.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import SCENARIOS, run_benchmark
from .core import DataError, DegenerateError, FitConfig, Kind, OverGFMError, SchemaError, validate
from .driver import fit
from .fileio import (
    RunManifest,
    read_data,
    read_matrix,
    read_schema,
    write_data,
    write_matrix,
    write_schema,
    write_text_atomic,
)
from .metrics import trace_statistic, trace_statistic_upsilon
from .selectq import DEFAULT_Q_MAX, singular_value_ratios
from .simulate import SCENARIO1_RHO, SimSpec, generate_dataset, thirds

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOCONV = 0, 2, 3, 4

log = logging.getLogger("overgfm")

_KIND_ALIASES = {
    "continuous": Kind.CONTINUOUS, "c": Kind.CONTINUOUS, "normal": Kind.CONTINUOUS, "gaussian": Kind.CONTINUOUS,
    "count": Kind.COUNT, "p": Kind.COUNT, "poisson": Kind.COUNT,
    "binomial": Kind.BINOMIAL, "b": Kind.BINOMIAL, "binary": Kind.BINOMIAL,
}


class UsageError(Exception):
    pass


def parse_types(text: str, p: int):
    """``thirds`` or a list like ``continuous:100,count:100,binomial:100``."""
    text = text.strip().lower()
    if text == "thirds":
        return thirds(p)
    mix = []
    for part in text.split(","):
        try:
            name, cnt = part.split(":")
            mix.append((_KIND_ALIASES[name.strip()], int(cnt)))
        except (ValueError, KeyError):
            raise UsageError(f"bad --types entry {part!r}; use kind:count or 'thirds'") from None
    if sum(c for _, c in mix) != p:
        raise UsageError(f"--types counts sum to {sum(c for _, c in mix)}, but --p is {p}")
    return tuple(mix)


def parse_noise(text: str):
    text = text.strip().lower()
    if text == "gaussian":
        return "gaussian", 1.0
    if text.startswith("t:"):
        try:
            df = float(text[2:])
        except ValueError:
            df = -1
        if df > 0:
            return "t", df
    raise UsageError(f"--noise must be 'gaussian' or 't:<df>' with df > 0, got {text!r}")


def resolve_threads(flag):
    if flag is not None:
        return flag
    env = os.environ.get("OVERGFM_THREADS")
    if env:
        try:
            t = int(env)
        except ValueError:
            raise UsageError(f"OVERGFM_THREADS must be an integer, got {env!r}") from None
        if t < 1:
            raise UsageError("OVERGFM_THREADS must be >= 1")
        return t
    return 1


def _load(args):
    schema = read_schema(args.schema)
    data = read_data(args.data, schema, getattr(args, "offsets", None))
    return validate(data, schema)


def _fit_config(args, q):
    try:
        return FitConfig(q=q, max_iter=args.max_iter, eps_elbo=args.eps_elbo,
                         threads=resolve_threads(args.threads), seed=args.seed)
    except OverGFMError as exc:
        raise UsageError(str(exc)) from None


def _check_q(q, ds, flag="--q"):
    if q >= min(ds.n, ds.p):
        raise UsageError(f"{flag}={q} must be at most min(n, p) - 1 = {min(ds.n, ds.p) - 1}")


# -- commands ---------------------------------------------------------------

def cmd_simulate(args):
    out = Path(args.out)
    mix = parse_types(args.types, args.p)
    kinds = [k for k, c in mix]
    if args.rho is None:
        if args.types.strip().lower() != "thirds":
            raise UsageError("--rho is required with an explicit --types list")
        rho_vals = [SCENARIO1_RHO[k] for k in kinds]
    else:
        try:
            rho_vals = [float(v) for v in args.rho.split(",")]
        except ValueError:
            raise UsageError(f"--rho must be a comma-separated list of numbers, got {args.rho!r}") from None
        if len(rho_vals) != len(kinds):
            raise UsageError(f"--rho has {len(rho_vals)} values for {len(kinds)} type blocks")
    rho = {}
    for k, v in zip(kinds, rho_vals):
        if k in rho and rho[k] != v:
            raise UsageError(f"conflicting --rho values for {k.value}")
        rho[k] = v
    noise, df = parse_noise(args.noise)
    try:
        spec = SimSpec(n=args.n, p=args.p, q=args.q, type_mix=mix, rho=rho, sigma2=args.sigma2,
                       noise=noise, df=df, mu_scale=args.mu_scale, trials=args.trials, seed=args.seed)
    except (OverGFMError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    sim = generate_dataset(spec)
    files = {
        "data": out / "data.csv", "schema": out / "schema.csv", "offsets": out / "offsets.csv",
        "H0": out / "H0.csv", "B0": out / "B0.csv", "mu0": out / "mu0.csv", "Y0": out / "Y0.csv",
    }
    write_data(files["data"], sim.data, sim.schema)
    write_schema(files["schema"], sim.schema)
    write_matrix(files["offsets"], sim.data.offsets, header=["offset"])
    write_matrix(files["H0"], sim.H0, prefix="H")
    write_matrix(files["B0"], sim.B0, prefix="B")
    write_matrix(files["mu0"], sim.mu0, header=["mu"])
    write_matrix(files["Y0"], sim.Y0, header=sim.schema.names)
    config = dict(n=args.n, p=args.p, q=args.q, types=[[k.value, c] for k, c in mix],
                  rho={k.value: v for k, v in rho.items()}, sigma2=args.sigma2, noise=noise, df=df,
                  mu_scale=args.mu_scale, trials=args.trials)
    return EXIT_OK, config, {}, files, {}


def cmd_fit(args):
    ds = _load(args)
    _check_q(args.q, ds)
    config = _fit_config(args, args.q)
    res = fit(ds, config=config)
    out = Path(args.out)
    p = res.params
    files = {k: out / f"{k}.csv" for k in ("H", "B", "mu", "lambda", "elbo_trace")}
    write_matrix(files["H"], p.H, prefix="H")
    write_matrix(files["B"], p.B, prefix="B")
    write_matrix(files["mu"], p.mu, header=["mu"])
    write_matrix(files["lambda"], p.lam, header=["lambda"])
    write_matrix(files["elbo_trace"], np.asarray(res.elbo_trace), header=["elbo"])
    extra = dict(iterations=res.iterations, converged=res.converged, elbo=res.elbo,
                 overflow_events=res.overflow_events,
                 rejected_site_updates=res.diagnostics.get("rejected_site_updates", 0))
    if not res.converged:
        print(f"warning: no convergence within {args.max_iter} iterations", file=sys.stderr)
    status = EXIT_OK if res.converged else EXIT_NOCONV
    inputs = dict(data=args.data, schema=args.schema)
    if args.offsets:
        inputs["offsets"] = args.offsets
    return status, _config_dict(config), inputs, files, extra


def cmd_select_q(args):
    ds = _load(args)
    _check_q(args.q_max, ds, "--q-max")
    if args.q_max < 2:
        raise UsageError("--q-max must be at least 2")
    config = _fit_config(args, args.q_max)
    res = fit(ds, config=config)
    rep = singular_value_ratios(res.params.B)
    out = Path(args.out)
    files = {"report": out / "select_q.json", "table": out / "svr.csv"}
    ratios = [None if math.isnan(r) else r for r in rep.ratios]
    report = dict(q_hat=rep.q_hat, q_max=args.q_max, max_ratio=rep.max_ratio if math.isfinite(rep.max_ratio) else None,
                  singular_values=list(rep.singular_values), ratios=ratios)
    write_text_atomic(files["report"], json.dumps(report, indent=2) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "singular_value", "ratio"])
    for k, nu in enumerate(rep.singular_values):
        r = ratios[k] if k < len(ratios) else None
        w.writerow([k + 1, repr(nu), "" if r is None else repr(r)])
    write_text_atomic(files["table"], buf.getvalue())
    print(f"q_hat = {rep.q_hat}")
    extra = dict(q_hat=rep.q_hat, iterations=res.iterations, converged=res.converged)
    return EXIT_OK, _config_dict(config), dict(data=args.data, schema=args.schema), files, extra


def cmd_evaluate(args):
    result = {}
    inputs = {}
    if bool(args.est_h) != bool(args.true_h):
        raise UsageError("--est-h and --true-h go together")
    gam = [args.est_b, args.est_mu, args.true_b, args.true_mu]
    if any(gam) and not all(gam):
        raise UsageError("--est-b, --est-mu, --true-b and --true-mu go together")
    if not args.est_h and not all(gam):
        raise UsageError("give --est-h/--true-h and/or --est-b/--est-mu/--true-b/--true-mu")
    try:
        if args.est_h:
            Hh, _ = read_matrix(args.est_h)
            H0, _ = read_matrix(args.true_h)
            result["tr_h"] = trace_statistic(Hh, H0)
            inputs.update(est_h=args.est_h, true_h=args.true_h)
        if all(gam):
            Bh, _ = read_matrix(args.est_b)
            muh, _ = read_matrix(args.est_mu)
            B0, _ = read_matrix(args.true_b)
            mu0, _ = read_matrix(args.true_mu)
            result["tr_gamma"] = trace_statistic_upsilon(Bh, muh[:, 0], B0, mu0[:, 0])
            inputs.update(est_b=args.est_b, est_mu=args.est_mu, true_b=args.true_b, true_mu=args.true_mu)
    except OverGFMError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(str(exc)) from None
    files = {"report": Path(args.out) / "evaluate.json"}
    write_text_atomic(files["report"], json.dumps(result, indent=2) + "\n")
    for k, v in result.items():
        print(f"{k} = {v!r}")
    return EXIT_OK, {}, inputs, files, result


def cmd_benchmark(args):
    out = Path(args.out)
    if args.replicates < 1:
        raise UsageError("--replicates must be positive")
    sizes = None
    if args.sizes:
        try:
            sizes = [int(s) for s in args.sizes.split(",")]
        except ValueError:
            raise UsageError(f"--sizes must be a comma-separated list of integers, got {args.sizes!r}") from None
    fit_kwargs = dict(threads=resolve_threads(args.threads))

    def progress(st, r, rows):
        log.info("%s replicate %d/%d", st.label, r + 1, args.replicates)

    rows, summary = run_benchmark(args.scenario, args.replicates, args.seed, out, sizes, fit_kwargs, progress)
    files = {"replicates": out / "replicates.csv", "summary": out / "summary.csv"}
    cols = ["setting", "method", "n", "p", "sigma2", "replicates"]
    metric_cols = sorted({k for s in summary for k in s} - set(cols))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols + metric_cols)
    for s in summary:
        w.writerow([s.get(c, "") for c in cols] + [repr(s[c]) if c in s else "" for c in metric_cols])
    write_text_atomic(files["summary"], buf.getvalue())
    print(_format_table(summary))
    config = dict(scenario=args.scenario, replicates=args.replicates, sizes=sizes, **fit_kwargs)
    return EXIT_OK, config, {}, files, {}


def _format_table(summary):
    lines = []
    for s in summary:
        parts = [f"{s['setting']:<22} {s['method']:<12}"]
        for m in ("tr_h", "tr_gamma", "hit", "q_hat", "seconds", "seconds_per_iter"):
            if f"{m}_mean" in s:
                parts.append(f"{m}={s[f'{m}_mean']:.4g}({s[f'{m}_sd']:.2g})")
        lines.append(" ".join(parts))
    return "\n".join(lines)


def _config_dict(config: FitConfig) -> dict:
    return dict(q=config.q, max_iter=config.max_iter, eps_elbo=config.eps_elbo,
                lambda_floor=config.lambda_floor, exp_clamp=config.exp_clamp,
                threads=config.threads, safeguard=config.safeguard)


# -- parser -----------------------------------------------------------------

def _pos_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _add_fit_flags(sp):
    sp.add_argument("--data", required=True)
    sp.add_argument("--schema", required=True)
    sp.add_argument("--offsets", default=None)
    sp.add_argument("--max-iter", type=_pos_int, default=100)
    sp.add_argument("--eps-elbo", type=float, default=1e-4)
    sp.add_argument("--threads", type=_pos_int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="overgfm", description="Overdispersed generalized factor model")
    ap.add_argument("--version", action="version", version=f"overgfm {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="draw a dataset from a simulation design")
    sp.add_argument("--n", type=_pos_int, required=True)
    sp.add_argument("--p", type=_pos_int, required=True)
    sp.add_argument("--q", type=_pos_int, required=True)
    sp.add_argument("--types", default="thirds")
    sp.add_argument("--rho", default=None, help="signal strengths, one per --types block")
    sp.add_argument("--sigma2", type=float, default=0.0)
    sp.add_argument("--noise", default="gaussian", help="gaussian or t:<df>")
    sp.add_argument("--mu-scale", type=float, default=0.4)
    sp.add_argument("--trials", type=_pos_int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit the model")
    _add_fit_flags(sp)
    sp.add_argument("--q", type=_pos_int, required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("select-q", help="choose the number of factors")
    _add_fit_flags(sp)
    sp.add_argument("--q-max", type=_pos_int, default=DEFAULT_Q_MAX)
    sp.set_defaults(func=cmd_select_q)

    sp = sub.add_parser("evaluate", help="trace statistics against ground truth")
    for flag in ("--est-h", "--true-h", "--est-b", "--est-mu", "--true-b", "--true-mu"):
        sp.add_argument(flag, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("benchmark", help="seeded replications of a simulation scenario")
    sp.add_argument("--scenario", choices=SCENARIOS, required=True)
    sp.add_argument("--replicates", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sizes", default=None, help="n / p grid for the timing scenario")
    sp.add_argument("--threads", type=_pos_int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(message)s")

    start = time.perf_counter()
    try:
        status, config, inputs, files, extra = args.func(args)
    except UsageError as exc:
        print(f"overgfm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SchemaError, DegenerateError) as exc:
        print(f"overgfm {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OverGFMError as exc:
        print(f"overgfm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA

    manifest = RunManifest(
        command=args.command,
        config={**config, **{f"result_{k}": v for k, v in extra.items()}},
        seed=getattr(args, "seed", None),
        inputs=inputs,
        outputs=files,
        duration_seconds=time.perf_counter() - start,
        version=__version__,
    )
    manifest.write(Path(args.out) / "manifest.json")
    return status


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
