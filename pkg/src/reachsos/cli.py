"""Command-line entry point: verify, simulate, bench.

Exit codes: 0 when the property is verified (or the command succeeded),
1 when the sweep finished without verification, 2 on input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import benchmarks, certify
from .driver import DEFAULT_CELL_BUDGET, compare_methods, run_sweep
from .poly import PolynomialParseError, parse_polynomial
from .problemio import ProblemFileError, load_problem
from .sdp import SolverConfig
from .sim import SimConfig, integrate, monte_carlo_reach_avoid
from .semialg import sample
from .sosbuild import DegreePlan, Method, MethodKind

EXIT_VERIFIED = 0
EXIT_NOT_VERIFIED = 1
EXIT_INPUT_ERROR = 2


class CliError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reachsos",
        description="Reach-avoid verification of polynomial systems via "
                    "sum-of-squares programming.")
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("verify", help="run the degree sweep on one problem")
    pv.add_argument("--problem", required=True, help="problem JSON file")
    pv.add_argument("--method", required=True,
                    choices=[k.value for k in MethodKind])
    pv.add_argument("--beta", type=float, default=None,
                    help="decrease rate (exp and combined only)")
    pv.add_argument("--alpha-m", default=None, metavar="POLY",
                    help="alpha multiplier m with alpha = m*v (general only)")
    pv.add_argument("--degrees", default="sweep",
                    help="'sweep' (2,4,...,20) or a comma list of even degrees")
    pv.add_argument("--eps", type=float, default=1e-6,
                    help="strict-positivity slack in the encodings")
    pv.add_argument("--trust-solver", action="store_true",
                    help="accept solver feasibility without independent validation")
    pv.add_argument("--grid", type=int, default=None, metavar="N",
                    help="export the level set on an N-per-axis grid (n <= 3)")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--out", default=None, help="write the report JSON here")
    pv.add_argument("--backend", default="builtin", choices=["builtin", "cvxopt"])
    pv.add_argument("--fallback-backend", default=None, choices=["builtin", "cvxopt"])
    pv.add_argument("--budget", type=float, default=DEFAULT_CELL_BUDGET,
                    help="per-degree wall-clock budget in seconds")
    pv.add_argument("--samples", type=int, default=10_000,
                    help="validation samples per constraint")
    pv.add_argument("--no-sim", action="store_true",
                    help="skip the simulation cross-check on the winner")
    pv.add_argument("--verbose", action="store_true")

    ps = sub.add_parser("simulate", help="Monte-Carlo reach-avoid check")
    ps.add_argument("--problem", required=True)
    ps.add_argument("--samples", type=int, default=500)
    ps.add_argument("--horizon", type=float, default=100.0)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--traj-out", default=None, metavar="DIR",
                    help="write one trajectory CSV (t, x1..xn) per sample here")
    ps.add_argument("--out", default=None, help="write the summary JSON here")

    pb = sub.add_parser("bench", help="run a benchmark suite comparison")
    pb.add_argument("--suite", required=True,
                    help=f"one of {benchmarks.SUITE_NAMES} or 'all'")
    pb.add_argument("--out", default=None, metavar="DIR",
                    help="write comparison tables here")
    pb.add_argument("--backend", default="builtin", choices=["builtin", "cvxopt"])
    pb.add_argument("--fallback-backend", default=None, choices=["builtin", "cvxopt"])
    pb.add_argument("--budget", type=float, default=DEFAULT_CELL_BUDGET)
    pb.add_argument("--max-degree", type=int, default=20)
    pb.add_argument("--trust-solver", action="store_true")
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--verbose", action="store_true")
    return parser


def _parse_method(args, dimension: int) -> Method:
    kind = MethodKind(args.method)
    if kind in (MethodKind.EXP, MethodKind.COMBINED):
        if args.beta is None:
            raise CliError(f"{kind.value} requires --beta")
    elif args.beta is not None:
        raise CliError(f"--beta is not accepted with method {kind.value}")
    if kind is MethodKind.GENERAL:
        if args.alpha_m is None:
            raise CliError("general requires --alpha-m")
        try:
            m_poly = parse_polynomial(args.alpha_m, dimension)
        except PolynomialParseError as exc:
            raise CliError(f"bad --alpha-m polynomial: {exc}") from exc
        return Method(kind, alpha_multiplier=m_poly)
    if args.alpha_m is not None:
        raise CliError(f"--alpha-m is not accepted with method {kind.value}")
    if kind in (MethodKind.EXP, MethodKind.COMBINED):
        return Method(kind, beta=args.beta)
    return Method(kind)


def _parse_degrees(text: str) -> DegreePlan:
    if text == "sweep":
        return DegreePlan.sweep()
    try:
        degrees = [int(t) for t in text.split(",") if t.strip()]
        return DegreePlan(degrees)
    except ValueError as exc:
        raise CliError(f"bad --degrees value {text!r}: {exc}") from exc


def _cmd_verify(args) -> int:
    instance = load_problem(args.problem)
    method = _parse_method(args, instance.dimension)
    plan = _parse_degrees(args.degrees)
    if args.eps <= 0:
        raise CliError("--eps must be positive")
    report = run_sweep(
        instance, method, plan,
        eps=args.eps,
        solver_config=SolverConfig(),
        backend=args.backend,
        trust_solver=args.trust_solver,
        validation_samples=args.samples,
        seed=args.seed,
        sim_check=not args.no_sim,
        cell_time_budget=args.budget,
        fallback_backend=args.fallback_backend,
        verbose=args.verbose,
    )
    payload = report.to_dict()
    if args.grid is not None and report.certificate is not None:
        if instance.dimension > 3:
            raise CliError("level-set export unsupported for dimension > 3")
        level = certify.extract_level_set(report.certificate.v,
                                          instance.bounding_box, args.grid)
        base = args.out or "report.json"
        grid_path = os.path.splitext(base)[0] + "_levelset.csv"
        seg_path = os.path.splitext(base)[0] + "_contour.csv"
        certify.write_level_set_csv(level, grid_path,
                                    seg_path if instance.dimension == 2 else None)
        payload["level_set"] = {"grid": grid_path,
                                "contour": seg_path if instance.dimension == 2 else None}
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(report.verdict)
    if not args.out:
        print(text)
    return EXIT_VERIFIED if report.verified else EXIT_NOT_VERIFIED


def _cmd_simulate(args) -> int:
    instance = load_problem(args.problem)
    config = SimConfig(t_max=args.horizon)
    summary = monte_carlo_reach_avoid(instance, args.samples, config, args.seed)
    payload = {
        "instance": instance.name,
        "samples": args.samples,
        "reached": summary.reached,
        "exited": summary.exited,
        "timeout": summary.timeout,
        "failed": summary.failed,
        "min_safety_margin": summary.min_safety_margin,
        "seed": summary.seed,
    }
    if args.traj_out and args.samples > 0:
        os.makedirs(args.traj_out, exist_ok=True)
        points, _ = sample(instance.initial, args.samples,
                           instance.bounding_box, args.seed)
        for idx, x0 in enumerate(points):
            traj = integrate(instance, x0, config)
            path = os.path.join(args.traj_out, f"traj_{idx:04d}.csv")
            with open(path, "w") as fh:
                fh.write("t," + ",".join(f"x{i + 1}" for i in range(instance.dimension)) + "\n")
                for t, state in zip(traj.times, traj.states):
                    fh.write(f"{float(t)!r}," + ",".join(repr(float(v)) for v in state) + "\n")
        payload["trajectory_dir"] = args.traj_out
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_VERIFIED


def _cmd_bench(args) -> int:
    names = benchmarks.SUITE_NAMES if args.suite == "all" else [args.suite]
    for name in names:
        if name not in benchmarks.SUITE_NAMES:
            raise CliError(f"unknown suite {name!r}; expected one of "
                           f"{benchmarks.SUITE_NAMES} or 'all'")
    plan = DegreePlan.sweep(args.max_degree)
    for name in names:
        instance, methods = benchmarks.load_suite(name)
        comparison = compare_methods(
            instance, methods, plan,
            backend=args.backend,
            fallback_backend=args.fallback_backend,
            trust_solver=args.trust_solver,
            cell_time_budget=args.budget,
            seed=args.seed,
            verbose=args.verbose,
        )
        print(f"== {name} ==")
        print(comparison.table())
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            with open(os.path.join(args.out, f"{name}.json"), "w") as fh:
                json.dump(comparison.to_dict(), fh, indent=2)
                fh.write("\n")
            with open(os.path.join(args.out, f"{name}.txt"), "w") as fh:
                fh.write(comparison.table() + "\n")
    return EXIT_VERIFIED


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT_ERROR if exc.code not in (0, None) else 0
    try:
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_bench(args)
    except (CliError, ProblemFileError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
