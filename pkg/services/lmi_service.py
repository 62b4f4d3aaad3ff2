"""
LMI service: builds the stability feasibility problems, solves them and searches
for the largest certified sampling period or decay rate
"""

import math
from typing import Callable, Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np

from models.errors import BracketError, ConfigurationError
from models.field import Field
from models.schemas import (
    BisectionProbe,
    BisectionResult,
    Certificate,
    ContinuousAvgParams,
    SampledAvgParams,
    SampledPointParams,
    SolveResult,
    SolveStatus,
)
from utils.kse_stepper import energy_norm_sq
from utils.lmi_assembly import (
    PROP1_VARS,
    PROP2_VARS,
    THM1_VARS,
    THM2_VARS,
    assemble_prop1,
    assemble_prop2,
    assemble_thm1,
    assemble_thm2,
)
from utils.logger import get_logger
from utils.sdp_solver import AffineMatrixConstraint, LmiProblem, SignConstraint, solve_feasibility

logger = get_logger(__name__)

ProblemName = Literal["prop1", "prop2", "thm1", "thm2"]

CSV_HEADER = "status,h,p1,p2,r,gamma,eta,lambda1,lambda2,lambda3,beta1,beta2,beta3,max_eig_worst"
_CSV_VARS = ("p1", "p2", "r", "gamma", "eta", "lambda1", "lambda2", "lambda3", "beta1", "beta2", "beta3")

_SIGNS: Dict[str, Dict[str, str]] = {
    "prop1": {"lambda1": "nonneg", "lambda2": "nonneg", "mu": "positive"},
    "prop2": {"eta": "positive", "lambda1": "nonneg",
              "beta1": "positive", "beta2": "positive", "beta3": "positive"},
    "thm1": {"r": "positive", "gamma": "positive", "p1": "positive", "p2": "positive",
             "lambda1": "nonneg", "lambda2": "nonneg"},
    "thm2": {"r": "positive", "gamma": "positive", "p1": "positive", "p2": "positive", "eta": "positive",
             "lambda1": "nonneg", "beta1": "positive", "beta2": "positive", "beta3": "positive"},
}


def _problem(
    name: str,
    all_vars: Sequence[str],
    blocks: Callable[[Certificate], List[Tuple[str, str, np.ndarray]]],
    signs: Mapping[str, str],
    fixed: Optional[Mapping[str, float]] = None,
) -> LmiProblem:
    """
    Decompose the named blocks of an assembly into affine constraints over the free variables.

    `blocks` maps a certificate to (name, sense, matrix) triples; fixed variables
    are substituted before the decomposition.
    """
    fixed = dict(fixed or {})
    unknown = set(fixed) - set(all_vars)
    if unknown:
        raise ConfigurationError(f"{name} has no decision variables {sorted(unknown)}")
    free = [v for v in all_vars if v not in fixed]

    def evaluate(values: Mapping[str, float]) -> List[Tuple[str, str, np.ndarray]]:
        return blocks(Certificate(problem=name, values={**values, **fixed}))

    layout = [(n, s) for n, s, _ in evaluate({v: 0.0 for v in free})]
    constraints = [
        AffineMatrixConstraint.from_callable(
            block, sense, lambda values, i=i: evaluate(values)[i][2], free,
        )
        for i, (block, sense) in enumerate(layout)
    ]
    sign_list = [SignConstraint(variable=v, kind=k) for v, k in signs.items() if v in all_vars]
    return LmiProblem(name=name, variables=free, constraints=constraints, signs=sign_list, fixed=fixed)


def build_prop1(p: ContinuousAvgParams, mu_free: bool = False) -> LmiProblem:
    variables = PROP1_VARS + (("mu",) if mu_free else ())
    return _problem(
        "prop1", variables,
        lambda v: [("upsilon", "nsd", assemble_prop1(p, v))],
        _SIGNS["prop1"],
    )


def build_prop2(p: ContinuousAvgParams) -> LmiProblem:
    def blocks(v: Certificate):
        b = assemble_prop2(p, v)
        return [("x1_curvature", "nsd", b.x1_curvature), ("x2_curvature", "nsd", b.x2_curvature),
                ("lambda", "nsd", b.lam), ("point_weights", "pd", b.point_weights)]

    return _problem("prop2", PROP2_VARS, blocks, _SIGNS["prop2"])


def build_thm1(p: SampledAvgParams, fixed: Optional[Mapping[str, float]] = None) -> LmiProblem:
    def blocks(v: Certificate):
        out = []
        for label, z in (("+C", p.c_bound), ("-C", -p.c_bound)):
            b = assemble_thm1(p, v, z)
            out += [(f"xi1{label}", "nsd", b.xi1), (f"xi2{label}", "nsd", b.xi2)]
        out.append(("energy", "pd", assemble_thm1(p, v, p.c_bound).energy))
        return out

    return _problem("thm1", THM1_VARS, blocks, _SIGNS["thm1"], fixed)


def build_thm2(
    p: SampledPointParams,
    lambda2_nonneg: bool = False,
    fixed: Optional[Mapping[str, float]] = None,
) -> LmiProblem:
    def blocks(v: Certificate):
        first = assemble_thm2(p, v, p.c_bound)
        out = [("mixed_curvature", "nsd", first.mixed_curvature), ("delayed", "nsd", first.delayed),
               ("energy", "pd", first.energy), ("point_weights", "pd", first.point_weights)]
        for label, z in (("+C", p.c_bound), ("-C", -p.c_bound)):
            b = assemble_thm2(p, v, z)
            out += [(f"lambda1{label}", "nsd", b.lam1), (f"lambda2{label}", "nsd", b.lam2)]
        return out

    signs = dict(_SIGNS["thm2"])
    if lambda2_nonneg:
        signs["lambda2"] = "nonneg"
    return _problem("thm2", THM2_VARS, blocks, signs, fixed)


def format_csv_line(result: SolveResult) -> str:
    """One row under CSV_HEADER; missing values are left empty"""
    values = result.certificate.values if result.certificate is not None else {}

    def num(x: Optional[float]) -> str:
        return "" if x is None else f"{x:.15g}"

    fields = [result.status.value, num(result.h)]
    fields += [num(values.get(v)) for v in _CSV_VARS]
    fields.append(num(result.report.worst_max_eig if result.report is not None else None))
    return ",".join(fields)


def attraction_margin(z0: Field, certificate: Certificate, c_bound: float) -> float:
    """C^2 - ||z0||_V^2 with the certificate's p1, p2; positive inside the certified region"""
    return c_bound ** 2 - energy_norm_sq(z0, certificate["p1"], certificate["p2"])


class LmiService:
    """Service for certification problems"""

    def __init__(self, eps: Optional[float] = None, solver: Optional[str] = None):
        self.eps = eps
        self.solver = solver

    def build(self, problem: ProblemName, params, *, mu_free: bool = False,
              lambda2_nonneg: bool = False, fixed: Optional[Mapping[str, float]] = None) -> LmiProblem:
        if problem == "prop1":
            return build_prop1(params, mu_free=mu_free)
        if problem == "prop2":
            return build_prop2(params)
        if problem == "thm1":
            return build_thm1(params, fixed=fixed)
        if problem == "thm2":
            return build_thm2(params, lambda2_nonneg=lambda2_nonneg, fixed=fixed)
        raise ConfigurationError(f"unknown problem {problem}")

    def solve(self, problem: ProblemName, params, **options) -> SolveResult:
        lmi = self.build(problem, params, **options)
        logger.info(f"Solving {problem} ({len(lmi.variables)} free variables)")
        result = solve_feasibility(lmi, eps=self.eps, solver=self.solver)
        result = result.model_copy(update={"h": getattr(params, "h", None)})
        margin = f"{result.margin:.3e}" if result.margin is not None else "n/a"
        logger.info(f"{problem}: {result.status.value} (margin {margin})")
        if problem == "thm2" and result.feasible and not options.get("lambda2_nonneg", False):
            l2 = result.certificate["lambda2"]
            if l2 < 0:
                logger.info(f"thm2 certificate uses lambda2={l2:.6g} < 0 (sign-free multiplier)")
        return result

    def complete_certificate(self, problem: ProblemName, params, fixed: Mapping[str, float],
                             **options) -> SolveResult:
        """Solve for the remaining variables with `fixed` frozen"""
        logger.info(f"Completing {problem} certificate with {dict(fixed)} frozen")
        return self.solve(problem, params, fixed=fixed, **options)

    def _bisect(
        self,
        problem: str,
        parameter: Literal["h", "delta"],
        feasible_at: Callable[[float], SolveResult],
        lo: float,
        hi: float,
        tol: float,
        scan: bool,
    ) -> BisectionResult:
        if tol <= 0 or hi <= lo:
            raise ConfigurationError(f"need tol > 0 and {parameter}_lo < {parameter}_hi")
        probes: List[BisectionProbe] = []

        def probe(x: float) -> SolveResult:
            res = feasible_at(x)
            probes.append(BisectionProbe(value=x, status=res.status))
            logger.debug(f"{problem} {parameter}={x:.6g}: {res.status.value}")
            return res

        best = probe(lo)
        if not best.feasible:
            raise BracketError(f"{problem} is not feasible at {parameter}_lo={lo:g} ({best.status.value})")
        if probe(hi).feasible:
            raise BracketError(f"{problem} is still feasible at {parameter}_hi={hi:g}")

        a, b = lo, hi
        while b - a > tol:
            mid = 0.5 * (a + b)
            res = probe(mid)
            if res.feasible:
                a, best = mid, res
            else:
                b = mid
            logger.info(f"{problem} {parameter} bracket [{a:.6g}, {b:.6g}]")

        anomalies: List[str] = []
        if scan:
            n = int(math.ceil((hi - lo) / tol))
            grid = np.linspace(lo, hi, n + 1)
            statuses = [probe(float(x)).feasible for x in grid]
            seen_infeasible = False
            for x, ok in zip(grid, statuses):
                if not ok:
                    seen_infeasible = True
                elif seen_infeasible:
                    anomalies.append(f"feasible at {parameter}={x:.6g} after an infeasible point")
            feasible_points = [x for x, ok in zip(grid, statuses) if ok]
            scan_best = max(feasible_points) if feasible_points else lo
            if abs(scan_best - a) > tol:
                anomalies.append(f"scan maximum {scan_best:.6g} differs from bisection {a:.6g}")
            for msg in anomalies:
                logger.warning(f"{problem}: non-monotone feasibility: {msg}")

        return BisectionResult(problem=problem, parameter=parameter, value=a, lo=lo, hi=hi, tol=tol,
                               probes=probes, anomalies=anomalies, last_feasible=best)

    def _feasible_lower_end(self, problem: str, feasible_at: Callable[[float], SolveResult],
                            lo: float, floor: float, factor: float = 0.5) -> float:
        """Halve lo until the problem is feasible there"""
        x = lo
        while not feasible_at(x).feasible:
            x *= factor
            if x < floor:
                raise BracketError(f"{problem} is not feasible for any h in [{floor:g}, {lo:g}]")
            logger.info(f"{problem} infeasible at the lower end, shrinking h_lo to {x:.6g}")
        return x

    def max_h(self, problem: Literal["thm1", "thm2"], params, h_lo: float, h_hi: float,
              tol: float = 0.01, scan: bool = True, shrink_lo: bool = False, h_floor: float = 1e-3,
              **options) -> BisectionResult:
        """
        Largest h (within tol) for which the sampled-data condition is feasible.

        Bisection assumes feasibility is monotone in h; the linear scan reports
        any evidence against that assumption. With shrink_lo an infeasible h_lo is
        halved (down to h_floor) before bisecting.
        """
        if problem not in ("thm1", "thm2"):
            raise ConfigurationError(f"max_h applies to thm1 or thm2, not {problem}")

        def feasible_at(h: float) -> SolveResult:
            return self.solve(problem, params.model_copy(update={"h": h}), **options)

        if shrink_lo:
            h_lo = self._feasible_lower_end(problem, feasible_at, h_lo, h_floor)
        logger.info(f"max_h for {problem} on [{h_lo:g}, {h_hi:g}], tol={tol:g}")
        result = self._bisect(problem, "h", feasible_at, h_lo, h_hi, tol, scan)
        logger.info(f"{problem}: h* = {result.value:.6g}")
        return result

    def max_delta(self, problem: Literal["prop1", "thm1"], params, delta_lo: float, delta_hi: float,
                  tol: float = 0.01, scan: bool = True, **options) -> BisectionResult:
        """Largest certified decay rate, assuming feasibility is lost monotonically as delta grows"""
        if problem not in ("prop1", "thm1"):
            raise ConfigurationError(f"max_delta applies to prop1 or thm1, not {problem}")
        logger.info(f"max_delta for {problem} on [{delta_lo:g}, {delta_hi:g}], tol={tol:g}")
        result = self._bisect(
            problem, "delta",
            lambda d: self.solve(problem, params.model_copy(update={"delta": d}), **options),
            delta_lo, delta_hi, tol, scan,
        )
        logger.info(f"{problem}: delta* = {result.value:.6g}")
        return result
