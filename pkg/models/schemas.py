"""
Pydantic schemas for parameters, certificates and reports
"""

from enum import Enum
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.errors import AssemblyError


class SolveStatus(str, Enum):
    """Outcome of a feasibility solve"""
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    SOLVER_ERROR = "solver_error"


# Functional-inequality parameters

class HalanayParams(BaseModel):
    """Parameters of the Halanay decay-rate equation"""
    delta: float = Field(..., gt=0.0, description="Decay parameter")
    delta1: float = Field(..., ge=0.0, description="Delayed cross term, 0 <= delta1 < 2*delta")
    h: float = Field(..., ge=0.0, description="Delay horizon")

    @model_validator(mode="after")
    def _check_cross_term(self):
        if self.delta1 >= 2.0 * self.delta:
            raise ValueError(f"delta1={self.delta1} must be < 2*delta={2.0 * self.delta}")
        return self


class FriedrichWeights(BaseModel):
    """Convex weights of the Friedrich-type inequality"""
    alpha1: float = Field(..., gt=0.0)
    alpha2: float = Field(..., gt=0.0)
    alpha3: float = Field(..., gt=0.0)

    @model_validator(mode="after")
    def _check_sum(self):
        total = self.alpha1 + self.alpha2 + self.alpha3
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {total!r}")
        return self


class PointBoundWeights(BaseModel):
    """Weights of the point-value bound; diag(beta) - eta*ones must be positive semidefinite"""
    eta: float = Field(..., gt=0.0)
    beta1: float = Field(..., gt=0.0)
    beta2: float = Field(..., gt=0.0)
    beta3: float = Field(..., gt=0.0)

    def test_matrix(self) -> np.ndarray:
        return np.diag([self.beta1, self.beta2, self.beta3]) - self.eta * np.ones((3, 3))

    @model_validator(mode="after")
    def _check_test_matrix(self):
        min_eig = float(np.linalg.eigvalsh(self.test_matrix())[0])
        if min_eig < -1e-12:
            raise ValueError(f"diag(beta) - eta*ones has eigenvalue {min_eig:.6g} < 0")
        return self


# Certification parameters

class ContinuousAvgParams(BaseModel):
    """Continuous-time averaged-measurement setting"""
    mu: float = Field(..., gt=0.0, description="Controller gain")
    delta: float = Field(..., ge=0.0, description="Decay rate")
    kappa: float = Field(..., description="Substrate angle parameter")
    delta_bar: float = Field(..., gt=0.0, le=1.0, description="Subdomain side length")


class SampledAvgParams(ContinuousAvgParams):
    """Sampled-data averaged-measurement setting"""
    h: float = Field(..., gt=0.0, description="Upper bound on the sampling interval")
    c_bound: float = Field(..., gt=0.0, description="State bound C of the certified region")


class SampledPointParams(SampledAvgParams):
    """Sampled-data point-measurement setting"""
    delta1: float = Field(..., gt=0.0, description="Halanay cross term")

    @model_validator(mode="after")
    def _check_cross_term(self):
        if self.delta1 >= 2.0 * self.delta:
            raise ValueError(f"delta1={self.delta1} must be < 2*delta={2.0 * self.delta}")
        return self


class Certificate(BaseModel):
    """Values of the decision variables of one LMI problem"""
    model_config = ConfigDict(frozen=True)

    problem: str
    values: Dict[str, float]

    def __getitem__(self, name: str) -> float:
        try:
            return self.values[name]
        except KeyError:
            raise AssemblyError(f"certificate for {self.problem} is missing variable '{name}'")

    def require(self, names: List[str]) -> None:
        missing = [n for n in names if n not in self.values]
        if missing:
            raise AssemblyError(f"certificate for {self.problem} is missing {', '.join(missing)}")

    def get(self, name: str, default: Optional[float] = None) -> Optional[float]:
        return self.values.get(name, default)

    def with_values(self, **updates: float) -> "Certificate":
        return Certificate(problem=self.problem, values={**self.values, **updates})


# Reports

class ConstraintCheck(BaseModel):
    """Extreme eigenvalue of one constraint at a certificate"""
    name: str
    sense: Literal["nsd", "pd", "sign"]
    extreme_eig: float = Field(..., description="max eigenvalue for nsd, min eigenvalue / slack otherwise")
    passed: bool


class VerificationReport(BaseModel):
    checks: List[ConstraintCheck]
    passed: bool
    worst_max_eig: float = Field(..., description="Largest max-eigenvalue over the nsd constraints")

    def failures(self) -> List[ConstraintCheck]:
        return [c for c in self.checks if not c.passed]


class SolveResult(BaseModel):
    """Status, certificate and verification of one feasibility solve"""
    problem: str
    status: SolveStatus
    margin: Optional[float] = None
    certificate: Optional[Certificate] = None
    report: Optional[VerificationReport] = None
    h: Optional[float] = None
    message: Optional[str] = None

    @property
    def feasible(self) -> bool:
        return self.status == SolveStatus.FEASIBLE


class BisectionProbe(BaseModel):
    value: float
    status: SolveStatus


class BisectionResult(BaseModel):
    """Largest certified value of a scalar parameter (h or delta)"""
    problem: str
    parameter: Literal["h", "delta"]
    value: float = Field(..., description="Largest feasible value found")
    lo: float
    hi: float
    tol: float
    probes: List[BisectionProbe] = Field(default_factory=list)
    anomalies: List[str] = Field(default_factory=list, description="Non-monotone scan findings")
    last_feasible: Optional[SolveResult] = None


# Simulation

class SimConfig(BaseModel):
    """Closed-loop simulation setup; field names are the config-file keys"""
    m: int = Field(64, ge=8, description="Grid intervals per side")
    dt: float = Field(2.5e-4, gt=0.0, description="Time step")
    horizon: float = Field(10.0, gt=0.0, description="Final time T")
    kappa: float = Field(-0.5)
    mu: float = Field(0.95, ge=0.0, description="Controller gain (0 gives the open loop)")
    control_mode: Literal["continuous", "sampled"] = "sampled"
    meas_mode: Literal["averaged", "point"] = "averaged"
    h: Optional[float] = Field(0.35, gt=0.0, description="Sampling period in sampled mode")
    delta_bar: float = Field(0.25, gt=0.0, le=1.0)
    ic: Literal["sinsin", "bump", "zero"] = Field("sinsin", description="Initial-condition family")
    amplitude: float = Field(0.236, description="Initial-condition amplitude")
    monitor_v1: bool = True
    p1: float = Field(80.6354, description="V1 weight on ||z||^2")
    p2: float = Field(5.145, description="V1 weight on ||Laplacian z||^2")
    r: float = Field(0.0, ge=0.0, description="V1 weight on the sampling-interval history term")
    monitor_delta: float = Field(0.1, ge=0.0, description="Exponential weight delta of the history term")
    c_bound: Optional[float] = Field(None, gt=0.0, description="Certified state bound C, enables the region check")
    output_stride: int = Field(40, ge=1, description="Emit a monitor row every this many steps")
    snapshot_times: List[float] = Field(default_factory=list)

    @field_validator("snapshot_times")
    @classmethod
    def _sorted_times(cls, v: List[float]) -> List[float]:
        if any(t < 0 for t in v):
            raise ValueError("snapshot times must be nonnegative")
        return sorted(v)

    @model_validator(mode="after")
    def _check_alignment(self):
        n_side = round(1.0 / self.delta_bar)
        if abs(n_side * self.delta_bar - 1.0) > 1e-12:
            raise ValueError(f"1/delta_bar must be an integer, got delta_bar={self.delta_bar}")
        if self.m % (2 * n_side) != 0:
            raise ValueError(f"m={self.m} must be divisible by 2/delta_bar={2 * n_side}")
        if self.control_mode == "sampled":
            if self.h is None:
                raise ValueError("sampled mode requires h")
            ratio = self.h / self.dt
            if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
                raise ValueError(f"h/dt = {ratio!r} must be a positive integer")
        if self.monitor_v1 and (self.p1 <= 0 or self.p2 <= 0):
            raise ValueError("p1 and p2 must be positive when V1 monitoring is enabled")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def steps_per_sample(self) -> int:
        """Steps between sampling instants; 1 in continuous mode"""
        if self.control_mode == "continuous":
            return 1
        return int(round(self.h / self.dt))


class MonitorRow(BaseModel):
    t: float
    V: float
    V1: float
    c0: float
    lap_sq: float
    blowup: bool = False


class MonitorSeries(BaseModel):
    """Lyapunov monitor rows in strictly increasing time"""
    rows: List[MonitorRow] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_rows(self):
        times = [r.t for r in self.rows]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("monitor times must be strictly increasing")
        for r in self.rows:
            finite = all(np.isfinite(x) for x in (r.t, r.V, r.c0, r.lap_sq))
            if not finite and not r.blowup:
                raise ValueError(f"non-finite monitor row at t={r.t} without blow-up flag")
        return self

    def at(self, t: float) -> MonitorRow:
        """Row with time closest to t"""
        if not self.rows:
            raise ValueError("empty monitor series")
        return min(self.rows, key=lambda r: abs(r.t - t))

    @property
    def blowup(self) -> bool:
        return any(r.blowup for r in self.rows)


class ControlRecord(BaseModel):
    t: float
    j: int
    u: float


# Command line

class ExperimentRecipe(BaseModel):
    """A named subcommand invocation and its raw parameters"""
    name: str
    kind: Literal["lmi", "max-h", "max-delta", "simulate", "halanay", "verify-lemmas", "reproduce"]
    params: Dict[str, object] = Field(default_factory=dict)


class LemmaReport(BaseModel):
    """Minimum normalized margin of every inequality check over a batch of random fields"""
    seed: int
    count: int
    m: int
    min_margins: Dict[str, float] = Field(..., description="Smallest margin per check")
    violations: Dict[str, int]
    invalid_weights_rejected: bool

    @property
    def passed(self) -> bool:
        return self.invalid_weights_rejected and all(v == 0 for v in self.violations.values())

    def render(self) -> str:
        lines = [f"verify-lemmas seed={self.seed} count={self.count} m={self.m}", "check,min_margin,violations"]
        for name in sorted(self.min_margins):
            lines.append(f"{name},{self.min_margins[name]:.12e},{self.violations[name]}")
        lines.append(f"invalid_weights_rejected,{str(self.invalid_weights_rejected).lower()},")
        lines.append(f"result,{'pass' if self.passed else 'fail'},")
        return "\n".join(lines) + "\n"


class StageResult(BaseModel):
    stage: str
    expected: str
    observed: str
    passed: bool
    note: str = ""


class ReproductionReport(BaseModel):
    stages: List[StageResult]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.stages)

    def failing(self) -> List[str]:
        return [s.stage for s in self.stages if not s.passed]

    def render(self) -> str:
        lines = ["stage,expected,observed,result,note"]
        for s in self.stages:
            lines.append(f"{s.stage},{s.expected},{s.observed},{'pass' if s.passed else 'FAIL'},{s.note}")
        return "\n".join(lines) + "\n"
