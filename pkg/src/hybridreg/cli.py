"""Command-line entry point: gen, solve, irr, sweep, summarize, plot.

Exit codes: 0 success, 2 configuration/input error, 3 finished with
per-row failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import regparam, subspace
from .experiment import (
    ConfigError,
    ExperimentConfig,
    _row,
    failed_rows,
    run_sweep,
    sort_key,
    table_summarize,
    write_rows,
)
from .plots import REQUIRED, PlotError, emit_plot
from .problems import (
    PROBLEMS,
    bsnr,
    export_problem,
    make_problem,
    noisy_sample,
    relative_error,
    write_dense,
)
from .solver import T_RULES, HybridOptions, ProjectedSystem, hybrid_solve, irr_iterate

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3

# per-problem defaults: (t_min, t_max)
T_DEFAULTS = {"phillips": (3, 74), "gravity": (3, 74), "blur2d": (25, 100), "tomo": (5, 100)}
PARAM_DEFAULTS = {"phillips": {"m": 152, "n": 304}, "gravity": {"m": 152, "n": 304}}


def parse_param(text):
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--param expects key=value, got {text!r}")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def parse_schedule(text):
    """Comma-separated items: ``n``, ``a:b`` or ``a:step:b`` (inclusive)."""
    ts = []
    for item in text.split(","):
        parts = item.strip().split(":")
        try:
            nums = [int(p) for p in parts]
        except ValueError:
            raise ConfigError(f"bad t schedule item {item!r}") from None
        if len(nums) == 1:
            ts.append(nums[0])
        elif len(nums) == 2:
            ts += range(nums[0], nums[1] + 1)
        elif len(nums) == 3 and nums[1] > 0:
            ts += range(nums[0], nums[2] + 1, nums[1])
        else:
            raise ConfigError(f"bad t schedule item {item!r}")
    return sorted(set(ts))


def _add_problem_args(p):
    p.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="problem parameter, e.g. m=152 (repeatable)")


def _add_noise_args(p, seed_required=False):
    p.add_argument("--eta", type=float, default=0.005, help="noise level eta")
    p.add_argument("--seed", type=int, required=seed_required, default=None if seed_required else 0)


def _add_solver_args(p):
    p.add_argument("--method", default="UPRE", choices=regparam.METHODS)
    p.add_argument("--t-rule", default="rho", choices=T_RULES)
    p.add_argument("--t-fixed", type=int, default=None)
    p.add_argument("--t-min", type=int, default=None)
    p.add_argument("--t-max", type=int, default=None)
    p.add_argument("--window", default="tau", choices=("tau", "spectrum"))
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--upsilon", type=float, default=1.05)
    p.add_argument("--omega", default="auto")
    p.add_argument("--grid-count", type=int, default=1000)


def _problem(args):
    params = dict(PARAM_DEFAULTS.get(args.problem, {}))
    params.update(parse_param(s) for s in args.param)
    try:
        return make_problem(args.problem, **params), params
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for {args.problem}: {exc}") from None


def _options(args, shape):
    t_min, t_max = T_DEFAULTS[args.problem]
    t_max = min(t_max, *shape) if args.t_max is None else args.t_max
    t_min = t_min if args.t_min is None else args.t_min
    omega = args.omega if args.omega == "auto" else float(args.omega)
    opts = HybridOptions(
        t_min=t_min, t_max=t_max, method=args.method, tau=args.tau, upsilon=args.upsilon,
        omega=omega, grid_count=args.grid_count, t_rule=args.t_rule, t_fixed=args.t_fixed,
        window=args.window,
    )
    try:
        return opts.validate(*shape)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rho(path, rs, markers, c=0):
    rows = [dict(c=c, t=t, logrho=float(v), **markers) for t, v in enumerate(rs.logrho, start=1)]
    write_rows(path, rows, ("c", "t", "logrho", "t_opt_rho", "t_opt_min", "t_opt_g"))


# ------------------------------------------------------------------ verbs


def cmd_gen(args):
    pi, _ = _problem(args)
    export_problem(pi, _outdir(args.out))
    print(f"{args.problem}: {pi.shape[0]}x{pi.shape[1]} written to {args.out}")
    return EXIT_OK


def cmd_solve(args):
    pi, _ = _problem(args)
    opts = _options(args, pi.shape)
    smp = noisy_sample(pi, args.eta, args.seed, args.sample)
    sol = hybrid_solve(pi.op, smp.b, smp.cov, opts=opts, x_ex=pi.x_ex)
    out = _outdir(args.out)
    write_dense(out / "x.dns", sol.x[:, None])
    _write_rho(out / "rho.csv", sol.rho_trace, sol.markers, args.sample)
    if sol.selection is not None:
        regparam.write_objective_csv(out / "objective.csv", [sol.selection])
    summary = {
        "problem": args.problem, "method": opts.method, "c": args.sample, "t": sol.t_used,
        "zeta": sol.zeta, "re": relative_error(sol.x, pi.x_ex), "bsnr": bsnr(pi.b_ex, smp.b),
        "res_proj": sol.residual_proj, "res_full": sol.residual_full,
        "markers": sol.markers, "flags": sol.flags,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"t={sol.t_used} zeta={sol.zeta:.6g} RE={summary['re']:.4f} "
          f"markers={sol.markers} flags={sol.flags}")
    return EXIT_OK


def cmd_irr(args):
    pi, params = _problem(args)
    opts = _options(args, pi.shape)
    if args.k_max < 1:
        raise ConfigError("--k-max must be at least 1")
    smp = noisy_sample(pi, args.eta, args.seed, args.sample)
    hist = irr_iterate(pi.op, smp.b, smp.cov, opts, k_max=args.k_max,
                       positivity=args.positivity, x_ex=pi.x_ex, rel_tol=args.rel_tol)
    ks = [it.k for it in hist.iterations]
    k_sel = ks[-1] if args.select_k is None else args.select_k
    if k_sel not in ks:
        raise ConfigError(f"--select-k {k_sel} not among computed iterations {ks}")
    out = _outdir(args.out)
    cfg = ExperimentConfig(problem=args.problem, params=params)
    b_snr = bsnr(pi.b_ex, smp.b)
    rows = []
    for it in hist.iterations:
        rows.append(_row(cfg, opts.method, args.sample, it.t_used, k=it.k,
                         sol={"zeta": it.zeta, "res_proj": it.residual_proj,
                              "res_full": it.residual_full},
                         re=it.re, b_snr=b_snr, markers=it.markers, flags=it.flags))
        _write_rho(out / f"rho_k{it.k}.csv", it.rho_trace, it.markers, args.sample)
        print(f"k={it.k} t={it.t_used} t_range=[{it.t_min},{it.t_max}] zeta={it.zeta:.6g} "
              f"RE={it.re:.4f} active={int(it.mask.sum())}")
    write_rows(out / "results.csv", sorted(rows, key=sort_key))
    write_dense(out / "x.dns", hist.iterations[ks.index(k_sel)].x[:, None])
    if hist.converged:
        print("converged: all coordinates frozen")
    print(f"selected k={k_sel}")
    return EXIT_OK


def cmd_sweep(args):
    if args.config:
        config = ExperimentConfig.load(args.config)
    else:
        if not args.problem:
            raise ConfigError("sweep needs --problem or --config")
        pi, params = _problem(args)
        config = ExperimentConfig(problem=args.problem, params=params,
                                  options=_options(args, pi.shape))
    config = replace(config, seed=args.seed, outdir=args.out)
    if args.samples is not None:
        config = replace(config, samples=args.samples)
    if args.eta is not None:
        config = replace(config, eta=args.eta)
    if args.methods is not None:
        config = replace(config, methods=tuple(m for m in args.methods.split(",") if m))
    if args.t_schedule is not None:
        config = replace(config, t_schedule=parse_schedule(args.t_schedule))
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    if args.irr_k_max is not None:
        config = replace(config, irr_k_max=args.irr_k_max)
    if args.positivity:
        config = replace(config, positivity=True)
    rows = run_sweep(config, resume=args.resume)
    bad = failed_rows(rows)
    print(f"{len(rows)} rows written to {Path(args.out) / 'results.csv'}; {len(bad)} failed")
    return EXIT_PARTIAL if bad else EXIT_OK


def cmd_summarize(args):
    summary = table_summarize(args.csv, args.out)
    print(f"{'problem':>10} {'method':>6} {'k':>2} {'t_rho':>6} {'t_ref':>6} "
          f"{'RE@t_ref':>10} {'RE_min':>8} {'t@min':>6}")
    for s in summary:
        print(f"{s['problem']:>10} {s['method']:>6} {s['k']:>2} {s['t_opt_rho_avg']:6.2f} "
              f"{s['t_ref']:6.1f} {s['re_at_t_ref']:10.4g} {s['re_min_avg']:8.4f} "
              f"{s['t_at_min_avg']:6.2f}")
    return EXIT_OK


def cmd_plot(args):
    emit_plot(args.csv, args.kind, args.out, title=args.title)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="hybridreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", help="export a test problem (DNS1 matrices, PGM phantom)")
    _add_problem_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="one hybrid solve on one noise sample")
    _add_problem_args(p)
    _add_noise_args(p)
    _add_solver_args(p)
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("irr", help="iteratively reweighted hybrid solves")
    _add_problem_args(p)
    _add_noise_args(p)
    _add_solver_args(p)
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--k-max", type=int, default=4)
    p.add_argument("--positivity", action="store_true")
    p.add_argument("--rel-tol", type=float, default=0.0)
    p.add_argument("--select-k", type=int, default=None,
                   help="iteration whose solution is written to x.dns (default: last)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_irr)

    p = sub.add_parser("sweep", help="seeded sweep over samples, t and methods")
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--methods", default=None, help="comma-separated list")
    p.add_argument("--t-schedule", default=None, help="e.g. 3:20,24:5:74")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--irr-k-max", type=int, default=None)
    p.add_argument("--positivity", action="store_true")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--out", required=True)
    _add_solver_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("summarize", help="Table-style summary of a sweep CSV")
    p.add_argument("csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("plot", help="render an SVG figure from a CSV")
    p.add_argument("csv")
    p.add_argument("--kind", required=True, choices=sorted(REQUIRED))
    p.add_argument("--out", required=True)
    p.add_argument("--title", default=None)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
