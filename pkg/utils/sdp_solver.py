"""
Affine matrix constraints, the semidefinite feasibility solve and the
independent eigenvalue verifier
"""

from typing import Callable, Dict, List, Literal, Mapping, Optional, Sequence

import cvxpy as cp
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import eigvalsh

from app.config import settings
from models.errors import AssemblyError
from models.schemas import (
    Certificate,
    ConstraintCheck,
    SolveResult,
    SolveStatus,
    VerificationReport,
)
from utils.logger import get_logger

logger = get_logger(__name__)

Sense = Literal["nsd", "pd"]


class AffineMatrixConstraint(BaseModel):
    """
    F0 + sum_i x_i F_i, required negative definite ("nsd") or positive definite ("pd")
    with the strictness margin applied by the solver
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    sense: Sense
    f0: np.ndarray
    terms: Dict[str, np.ndarray] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_matrices(self):
        n = self.f0.shape[0]
        for label, a in [("F0", self.f0)] + list(self.terms.items()):
            if a.shape != (n, n):
                raise ValueError(f"{self.name}: {label} has shape {a.shape}, expected {n}x{n}")
            if not np.allclose(a, a.T, rtol=0.0, atol=1e-14):
                raise ValueError(f"{self.name}: {label} is not symmetric")
        return self

    @property
    def dim(self) -> int:
        return self.f0.shape[0]

    @classmethod
    def from_callable(
        cls,
        name: str,
        sense: Sense,
        fn: Callable[[Mapping[str, float]], np.ndarray],
        variables: Sequence[str],
    ) -> "AffineMatrixConstraint":
        """
        Decompose an affine matrix-valued map by evaluating it at the origin and the unit vectors.

        Terms that vanish identically are dropped.
        """
        zero = {name_: 0.0 for name_ in variables}
        f0 = np.asarray(fn(zero), dtype=float)
        terms = {}
        for var in variables:
            fi = np.asarray(fn({**zero, var: 1.0}), dtype=float) - f0
            if np.any(fi != 0.0):
                terms[var] = fi
        return cls(name=name, sense=sense, f0=f0, terms=terms)

    def evaluate(self, values: Mapping[str, float]) -> np.ndarray:
        missing = [v for v in self.terms if v not in values]
        if missing:
            raise AssemblyError(f"{self.name}: no value for {', '.join(missing)}")
        out = self.f0.copy()
        for var, fi in self.terms.items():
            out = out + values[var] * fi
        return out

    def expression(self, variables: Mapping[str, cp.Variable]) -> cp.Expression:
        expr = cp.Constant(self.f0)
        for var, fi in self.terms.items():
            expr = expr + variables[var] * fi
        return expr


class SignConstraint(BaseModel):
    """positive: x > 0 (held with the strictness margin); nonneg: x >= 0"""
    variable: str
    kind: Literal["positive", "nonneg"]


class LmiProblem(BaseModel):
    """A feasibility problem over named scalar decision variables"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    variables: List[str]
    constraints: List[AffineMatrixConstraint]
    signs: List[SignConstraint] = Field(default_factory=list)
    fixed: Dict[str, float] = Field(default_factory=dict, description="Frozen decision variables")

    @model_validator(mode="after")
    def _check_variables(self):
        overlap = set(self.variables) & set(self.fixed)
        if overlap:
            raise ValueError(f"variables both free and fixed: {sorted(overlap)}")
        known = set(self.variables) | set(self.fixed)
        for c in self.constraints:
            unknown = set(c.terms) - set(self.variables)
            if unknown:
                raise ValueError(f"{c.name} depends on undeclared variables {sorted(unknown)}")
        for s in self.signs:
            if s.variable not in known:
                raise ValueError(f"sign constraint on unknown variable {s.variable}")
        return self


def _sign_ok(value: float, kind: str, tol: float) -> bool:
    if kind == "positive":
        return value > 0.0
    return value >= -tol


def verify_certificate(
    constraints: Sequence[AffineMatrixConstraint],
    certificate: Certificate,
    signs: Sequence[SignConstraint] = (),
    tol: Optional[float] = None,
) -> VerificationReport:
    """
    Evaluate every constraint at the certificate and check its extreme eigenvalue
    with LAPACK's symmetric eigensolver.

    nsd constraints pass with max eigenvalue <= tol, pd constraints with
    min eigenvalue >= -tol; positive variables must be > 0.
    """
    tol = settings.verify_tol if tol is None else tol
    checks = []
    worst = -np.inf
    for c in constraints:
        a = c.evaluate(certificate.values)
        eigs = eigvalsh(a)
        if c.sense == "nsd":
            extreme = float(eigs[-1])
            passed = extreme <= tol
            worst = max(worst, extreme)
        else:
            extreme = float(eigs[0])
            passed = extreme >= -tol
        checks.append(ConstraintCheck(name=c.name, sense=c.sense, extreme_eig=extreme, passed=passed))
    for s in signs:
        value = certificate[s.variable]
        checks.append(ConstraintCheck(
            name=f"{s.variable} {s.kind}", sense="sign", extreme_eig=value,
            passed=_sign_ok(value, s.kind, tol),
        ))
    passed = all(c.passed for c in checks)
    return VerificationReport(checks=checks, passed=passed, worst_max_eig=float(worst))


def solve_feasibility(
    problem: LmiProblem,
    eps: Optional[float] = None,
    solver: Optional[str] = None,
    bound: Optional[float] = None,
) -> SolveResult:
    """
    Margin maximization: maximize t subject to nsd constraints <= -t I, pd constraints >= t I,
    positive variables >= t, nonneg variables >= 0, t <= 1 and |x_i| <= bound.

    The problem is feasible when the optimal t reaches eps and the verifier accepts the point.
    """
    eps = settings.lmi_eps if eps is None else eps
    solver = settings.sdp_solver if solver is None else solver
    bound = settings.variable_bound if bound is None else bound

    for s in problem.signs:
        if s.variable in problem.fixed and not _sign_ok(problem.fixed[s.variable], s.kind, 0.0):
            return SolveResult(problem=problem.name, status=SolveStatus.INFEASIBLE,
                               message=f"fixed {s.variable}={problem.fixed[s.variable]} violates {s.kind}")

    x = {name: cp.Variable(name=name) for name in problem.variables}
    t = cp.Variable(name="margin")
    cons = [t <= 1.0]
    for name in problem.variables:
        cons += [x[name] <= bound, x[name] >= -bound]
    for c in problem.constraints:
        # Fixed variables are already folded into F0 by the problem builder
        expr = c.expression(x)
        expr = (expr + expr.T) / 2.0
        eye = np.eye(c.dim)
        if c.sense == "nsd":
            cons.append(expr << -t * eye)
        else:
            cons.append(expr >> t * eye)
    for s in problem.signs:
        if s.variable in x:
            cons.append(x[s.variable] >= (t if s.kind == "positive" else 0.0))

    prob = cp.Problem(cp.Maximize(t), cons)
    logger.debug(f"Solving {problem.name}: {len(problem.variables)} variables, "
                 f"{len(problem.constraints)} matrix constraints, solver={solver}")
    try:
        prob.solve(solver=solver)
    except cp.SolverError as e:
        logger.warning(f"{problem.name}: solver failure: {e}")
        return SolveResult(problem=problem.name, status=SolveStatus.SOLVER_ERROR, message=str(e))

    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or t.value is None:
        logger.warning(f"{problem.name}: solver status {prob.status}")
        return SolveResult(problem=problem.name, status=SolveStatus.SOLVER_ERROR,
                           message=f"solver status {prob.status}")

    margin = float(t.value)
    if margin < eps:
        logger.debug(f"{problem.name}: best margin {margin:.3e} < eps={eps:.1e}")
        return SolveResult(problem=problem.name, status=SolveStatus.INFEASIBLE, margin=margin)

    values = {name: float(var.value) for name, var in x.items()}
    values.update(problem.fixed)
    certificate = Certificate(problem=problem.name, values=values)
    report = verify_certificate(problem.constraints, certificate, problem.signs)
    if not report.passed:
        failed = ", ".join(c.name for c in report.failures())
        logger.warning(f"{problem.name}: solver reported margin {margin:.3e} but verification failed on {failed}")
        return SolveResult(problem=problem.name, status=SolveStatus.SOLVER_ERROR, margin=margin,
                           certificate=certificate, report=report,
                           message=f"verification failed: {failed}")
    return SolveResult(problem=problem.name, status=SolveStatus.FEASIBLE, margin=margin,
                       certificate=certificate, report=report)
