"""
LMI feasibility, completion and bisection subcommands
"""

import argparse
from typing import Dict

from models.errors import ConfigurationError
from models.schemas import (
    ContinuousAvgParams,
    ExperimentRecipe,
    SampledAvgParams,
    SampledPointParams,
    SolveResult,
    SolveStatus,
)
from services.lmi_service import CSV_HEADER, LmiService, format_csv_line
from utils.logger import get_logger

logger = get_logger(__name__)

TARGETS = ("prop1", "prop2", "thm1", "thm2", "max-h", "max-delta")

_EXIT = {SolveStatus.FEASIBLE: 0, SolveStatus.INFEASIBLE: 1, SolveStatus.SOLVER_ERROR: 2}


def register(subparsers) -> None:
    parser = subparsers.add_parser("lmi", help="Solve a stability LMI or search its maximal h or delta")
    parser.add_argument("target", choices=TARGETS)
    parser.add_argument("--problem", choices=("prop1", "thm1", "thm2"), default=None,
                        help="Problem searched by max-h (thm1|thm2) or max-delta (prop1|thm1)")
    parser.add_argument("--mu", type=float, default=0.95)
    parser.add_argument("--delta", type=float, default=0.1)
    parser.add_argument("--delta1", type=float, default=None)
    parser.add_argument("--kappa", type=float, default=-0.5)
    parser.add_argument("--delta-bar", type=float, default=0.25)
    parser.add_argument("--h", type=float, default=None)
    parser.add_argument("--c-bound", type=float, default=2.0)
    parser.add_argument("--eps", type=float, default=None, help="Strictness margin (default from settings)")
    parser.add_argument("--mu-free", action="store_true", help="prop1: treat mu as a decision variable")
    parser.add_argument("--lambda2-nonneg", action="store_true", help="thm2: require lambda2 >= 0")
    parser.add_argument("--fix-p1", type=float, default=None)
    parser.add_argument("--fix-p2", type=float, default=None)
    parser.add_argument("--h-lo", type=float, default=0.1)
    parser.add_argument("--h-hi", type=float, default=0.6)
    parser.add_argument("--delta-lo", type=float, default=0.0)
    parser.add_argument("--delta-hi", type=float, default=2.0)
    parser.add_argument("--tol", type=float, default=0.01)
    parser.add_argument("--no-scan", action="store_true", help="Skip the monotonicity scan after bisection")
    parser.add_argument("--shrink-lo", action="store_true",
                        help="max-h: halve an infeasible --h-lo until feasible before bisecting")
    parser.set_defaults(handler=run, recipe=recipe)


def recipe(args: argparse.Namespace) -> ExperimentRecipe:
    kind = args.target if args.target in ("max-h", "max-delta") else "lmi"
    params = {k: v for k, v in vars(args).items() if k not in ("handler", "recipe") and v is not None}
    return ExperimentRecipe(name=f"lmi {args.target}", kind=kind, params=params)


def build_params(problem: str, args: argparse.Namespace, h=None):
    """Validated parameter object for the problem; pydantic rejects anything missing or out of range"""
    base = dict(mu=args.mu, delta=args.delta, kappa=args.kappa, delta_bar=args.delta_bar)
    if problem in ("prop1", "prop2"):
        return ContinuousAvgParams(**base)
    sampled = dict(base, h=args.h if h is None else h, c_bound=args.c_bound)
    if problem == "thm1":
        return SampledAvgParams(**sampled)
    return SampledPointParams(**sampled, delta1=args.delta1)


def _options(problem: str, args: argparse.Namespace) -> Dict[str, object]:
    options: Dict[str, object] = {}
    if args.mu_free:
        if problem != "prop1":
            raise ConfigurationError("--mu-free applies to prop1 only")
        options["mu_free"] = True
    if args.lambda2_nonneg:
        if problem != "thm2":
            raise ConfigurationError("--lambda2-nonneg applies to thm2 only")
        options["lambda2_nonneg"] = True
    fixed = {k: v for k, v in (("p1", args.fix_p1), ("p2", args.fix_p2)) if v is not None}
    if fixed:
        if problem not in ("thm1", "thm2"):
            raise ConfigurationError("--fix-p1/--fix-p2 apply to thm1 and thm2")
        options["fixed"] = fixed
    return options


def _print_result(result: SolveResult) -> None:
    margin = f"{result.margin:.6e}" if result.margin is not None else "n/a"
    print(f"{result.problem}: {result.status.value} (margin {margin})")
    if result.message:
        print(f"note: {result.message}")
    print(CSV_HEADER)
    print(format_csv_line(result))


def run(args: argparse.Namespace) -> int:
    service = LmiService(eps=args.eps)

    if args.target == "max-h":
        problem = args.problem or "thm1"
        if problem not in ("thm1", "thm2"):
            raise ConfigurationError("max-h needs --problem thm1 or thm2")
        params = build_params(problem, args, h=args.h_lo)
        result = service.max_h(problem, params, args.h_lo, args.h_hi, tol=args.tol,
                               scan=not args.no_scan, shrink_lo=args.shrink_lo, **_options(problem, args))
        print(f"{problem}: h* = {result.value:.12g} (tol {result.tol:g}, {len(result.probes)} solves)")
    elif args.target == "max-delta":
        problem = args.problem or "prop1"
        if problem not in ("prop1", "thm1"):
            raise ConfigurationError("max-delta needs --problem prop1 or thm1")
        params = build_params(problem, args).model_copy(update={"delta": args.delta_lo})
        result = service.max_delta(problem, params, args.delta_lo, args.delta_hi, tol=args.tol,
                                   scan=not args.no_scan, **_options(problem, args))
        print(f"{problem}: delta* = {result.value:.12g} (tol {result.tol:g}, {len(result.probes)} solves)")
    else:
        problem = args.target
        options = _options(problem, args)
        params = build_params(problem, args)
        if "fixed" in options:
            fixed = options.pop("fixed")
            outcome = service.complete_certificate(problem, params, fixed, **options)
        else:
            outcome = service.solve(problem, params, **options)
        _print_result(outcome)
        return _EXIT[outcome.status]

    for anomaly in result.anomalies:
        print(f"anomaly: {anomaly}")
    if result.last_feasible is not None:
        _print_result(result.last_feasible)
    return 0
