"""Command-line entry point: ``desing run``, ``desing verify``, ``desing generate``."""

from __future__ import annotations

import argparse
import sys

from . import harness, verify
from .costs import generate_problem, save_problem


def _add_problem_flags(p):
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--r", type=int, help="optimization rank")
    p.add_argument("--r-star", type=int, help="rank of the target")
    p.add_argument("--oversampling", type=float)
    p.add_argument("--sv", help="uniform:lo,hi or expdecay:rho")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="desing", description="Low-rank optimization on the desingularization.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a completion experiment and write CSV traces")
    run.add_argument("--preset", choices=sorted(harness.PRESETS))
    run.add_argument("--config", help="flat key = value settings file")
    _add_problem_flags(run)
    run.add_argument("--alpha", help="comma-separated metric parameters, e.g. 0.05,0.5,5")
    run.add_argument("--geometry", help="comma-separated subset of desing,lr,fixed_rank, or all")
    run.add_argument("--solver", choices=harness.SOLVERS)
    run.add_argument("--retraction", help="metric_projection, polar or qfactor")
    run.add_argument("--max-iters", type=int)
    run.add_argument("--grad-tol", type=float)
    run.add_argument("--cost-tol", type=float, help="stop once the cost falls to this value")
    run.add_argument("--max-time", type=float, help="per-run wall-clock budget in seconds")
    run.add_argument("--out", help="output directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    ver = sub.add_parser("verify", help="run the property self-checks")
    ver.add_argument("suites", nargs="*", default=["all"], help=f"any of {', '.join(verify.SUITES)} or all")
    ver.add_argument("--seed", type=int, default=0)

    gen = sub.add_parser("generate", help="write a synthetic completion problem to an .npz file")
    _add_problem_flags(gen)
    gen.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    config = harness.parse_config_file(args.config) if args.config else None
    overrides = {
        "m": args.m, "n": args.n, "r": args.r, "r_star": args.r_star, "oversampling": args.oversampling,
        "sv_spec": args.sv, "seed": args.seed, "alphas": args.alpha, "geometries": args.geometry,
        "solver": args.solver, "retraction": args.retraction, "max_iters": args.max_iters,
        "grad_tol": args.grad_tol, "cost_tol": args.cost_tol, "max_time": args.max_time, "out": args.out,
    }
    spec = harness.build_spec(args.preset, config, overrides)
    for s in harness.run_experiment(spec, jobs=args.jobs):
        print(f"{s['label']}: status={s['status']} outer_iters={s['outer_iters']} "
              f"cost={s['final_cost']:.3e} grad_norm={s['final_grad_norm']:.3e} "
              f"time={s['wall_time_s']:.2f}s -> {spec.out}/{s['csv']}")
    return 0


def _cmd_verify(args) -> int:
    checks = verify.run_suites(args.suites, seed=args.seed)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def _cmd_generate(args) -> int:
    spec = harness.build_spec(None, None, {
        "m": args.m, "n": args.n, "r": args.r, "r_star": args.r_star,
        "oversampling": args.oversampling, "sv_spec": args.sv, "seed": args.seed,
    })
    problem = generate_problem(spec.m, spec.n, spec.r_star, r=spec.r, oversampling=spec.oversampling,
                               sv_spec=spec.sv_spec, seed=spec.seed)
    save_problem(problem, args.out)
    print(f"wrote {args.out}: {spec.m}x{spec.n}, r_star={spec.r_star}, nnz={problem.mask.nnz}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "verify": _cmd_verify, "generate": _cmd_generate}[args.command]
    try:
        return handler(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"desing {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
