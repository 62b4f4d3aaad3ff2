"""
IMEX time stepping of the controlled 2D Kuramoto-Sivashinsky equation

    z_t + z z_x1 + (1 - kappa) z_x1x1 - kappa z_x2x2 + Laplacian^2 z = sum_j chi_j U_j

on the interior unknowns of a clamped grid. The linear part is implicit with a
factorization computed once per stepper; the nonlinearity and the control are explicit.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np
import scipy.sparse as sps
from scipy.integrate import trapezoid
from scipy.linalg import eigvalsh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, splu

from models.errors import ConfigurationError, PreconditionError
from models.field import Field, Grid2D, Partition
from models.schemas import MonitorRow, SimConfig
from utils.field_ops import (
    c0_norm,
    from_interior,
    interior_operators,
    l2_sq,
    laplacian_sq,
    measure,
)
from utils.logger import get_logger

logger = get_logger(__name__)

BLOWUP_C0 = 1e6
DENSE_EIG_LIMIT = 2500


@dataclass
class SimState:
    """
    Closed-loop state at one time step.

    zt_history holds (s, ||z_t(s)||^2) from the last sampling instant up to t.
    """
    z: Field
    held_u: np.ndarray
    step_index: int = 0
    t: float = 0.0
    last_sample_t: float = 0.0
    zt_history: List[Tuple[float, float]] = field(default_factory=list)
    blowup: bool = False


def energy_norm_sq(f: Field, p1: float, p2: float) -> float:
    """p1 ||f||^2 + p2 ||Laplacian f||^2"""
    return p1 * l2_sq(f) + p2 * laplacian_sq(f)


def initial_field(config: SimConfig) -> Field:
    grid = Grid2D(m=config.m)
    a = config.amplitude
    if config.ic == "zero":
        return Field.zeros(grid)
    if config.ic == "sinsin":
        return Field.from_function(grid, lambda x1, x2: a * np.sin(np.pi * x1) * np.sin(np.pi * x2))
    # clamped polynomial bubble with peak value a at the center
    return Field.from_function(
        grid, lambda x1, x2: a * 256.0 * x1 ** 2 * (1 - x1) ** 2 * x2 ** 2 * (1 - x2) ** 2
    )


def sample_and_hold(state: SimState, partition: Partition, config: SimConfig) -> np.ndarray:
    """ZOH values -mu * y_jk from the measurements of the current state"""
    if state.step_index % config.steps_per_sample != 0:
        raise PreconditionError(
            f"t={state.t:.6g} is not a sampling instant (step {state.step_index}, "
            f"{config.steps_per_sample} steps per sample)"
        )
    y = np.array([measure(state.z, s, partition, config.meas_mode) for s in partition.subdomains])
    return -config.mu * y


def apply_control(acc: np.ndarray, partition: Partition, grid: Grid2D, held_u: np.ndarray) -> np.ndarray:
    """Add held_u[j] on every node owned by subdomain j"""
    if held_u.shape != (partition.N,):
        raise PreconditionError(f"held_u has shape {held_u.shape}, expected ({partition.N},)")
    return acc + held_u[partition.owner_map(grid)]


def smallest_eigenvalue(a: sps.spmatrix) -> float:
    """Smallest eigenvalue of a sparse symmetric matrix; dense fallback when ARPACK stalls"""
    try:
        return float(eigsh(sps.csr_matrix(a), k=1, which="SA", tol=1e-8, return_eigenvectors=False)[0])
    except ArpackNoConvergence:
        n = a.shape[0]
        if n > DENSE_EIG_LIMIT:
            raise ConfigurationError(
                f"could not confirm that the {n}x{n} implicit operator is positive definite "
                f"(ARPACK did not converge)"
            )
        logger.warning(f"ARPACK did not converge on {n} unknowns; checking the spectrum densely")
        return float(eigvalsh(sps.csr_matrix(a).toarray(), subset_by_index=[0, 0])[0])


class FactorizedOperator:
    """LU factors of a sparse symmetric positive definite matrix, reused for every solve"""

    def __init__(self, a: sps.spmatrix):
        self.shape = a.shape
        self._lu = splu(
            sps.csc_matrix(a),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        if not self._positive_definite(a):
            raise ConfigurationError(
                "implicit operator I + dt*L is not positive definite; reduce dt"
            )
        logger.debug(f"Factorized {self.shape[0]} unknowns, nnz(L+U)={self._lu.L.nnz + self._lu.U.nnz}")

    def _positive_definite(self, a: sps.spmatrix) -> bool:
        # with symmetric pivoting U's diagonal holds the LDL^T pivots (Sylvester's inertia)
        if np.array_equal(self._lu.perm_r, self._lu.perm_c):
            return bool(np.all(self._lu.U.diagonal() > 0.0))
        return smallest_eigenvalue(a) > 0.0

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(rhs)


class KseStepper:
    """Grid, partition and frozen factorization of one simulation setup"""

    def __init__(self, config: SimConfig):
        self.config = config
        self.grid = Grid2D(m=config.m)
        self.partition = Partition.build(config.delta_bar)
        self.partition.check_alignment(self.grid, centers=True)
        self.owner = self.partition.owner_map(self.grid)

        d11, d22, bih = interior_operators(self.grid)
        linear = bih + (1.0 - config.kappa) * d11 - config.kappa * d22
        n = linear.shape[0]
        self.implicit = FactorizedOperator(sps.identity(n, format="csr") + config.dt * linear)

    def initial_state(self, z0: Field) -> SimState:
        if z0.grid != self.grid:
            raise ConfigurationError(f"initial field has m={z0.grid.m}, config has m={self.grid.m}")
        state = SimState(z=z0, held_u=np.zeros(self.partition.N))
        state.held_u = sample_and_hold(state, self.partition, self.config)
        return state

    def _nonlinear(self, a: np.ndarray) -> np.ndarray:
        """z z_x1 as the central difference of z^2 / 2 on interior nodes"""
        sq = a * a
        return (sq[2:, 1:-1] - sq[:-2, 1:-1]) / (4.0 * self.grid.dx)

    def step(self, state: SimState) -> SimState:
        """
        One IMEX step (I + dt L) z+ = z - dt N(z) + dt chi U.

        The held control is refreshed when the new time is a sampling instant.
        """
        cfg = self.config
        a = state.z.array
        control = apply_control(np.zeros(self.grid.shape), self.partition, self.grid, state.held_u)
        u = a[1:-1, 1:-1]
        rhs = u - cfg.dt * self._nonlinear(a) + cfg.dt * control[1:-1, 1:-1]
        u_new = self.implicit.solve(rhs.reshape(-1)).reshape(u.shape)

        index = state.step_index + 1
        t = index * cfg.dt
        if not np.all(np.isfinite(u_new)) or np.max(np.abs(u_new)) > BLOWUP_C0:
            logger.warning(f"Blow-up detected at t={t:.6g}")
            return replace(state, step_index=index, t=t, blowup=True)

        z_new = Field.from_array(self.grid, from_interior(self.grid, u_new))
        zt_sq = self.grid.dx ** 2 * float(np.sum(((u_new - u) / cfg.dt) ** 2))
        # the history list is handed forward and extended in place
        history = state.zt_history
        if not history:
            # first step after t = 0; the backward difference stands in for z_t at the start
            history.append((state.t, zt_sq))
        history.append((t, zt_sq))
        new = SimState(step_index=index, t=t, z=z_new, held_u=state.held_u,
                       last_sample_t=state.last_sample_t, zt_history=history)
        if index % cfg.steps_per_sample == 0:
            new.held_u = sample_and_hold(new, self.partition, cfg)
            new.last_sample_t = t
            new.zt_history = [(t, zt_sq)]
        return new

    def history_term(self, state: SimState) -> float:
        """r (t_k+1 - t) times the trapezoidal integral of exp(2 delta (s - t)) ||z_s||^2 over [t_k, t]"""
        cfg = self.config
        if cfg.control_mode != "sampled" or cfg.r == 0.0 or len(state.zt_history) < 2:
            return 0.0
        s, v = np.array(state.zt_history).T
        integral = trapezoid(np.exp(2.0 * cfg.monitor_delta * (s - state.t)) * v, s)
        return cfg.r * (state.last_sample_t + cfg.h - state.t) * float(integral)

    def monitors(self, state: SimState) -> MonitorRow:
        if state.blowup:
            return MonitorRow(t=state.t, V=math.inf, V1=math.inf, c0=math.inf, lap_sq=math.inf, blowup=True)
        cfg = self.config
        v = l2_sq(state.z)
        lap_sq = laplacian_sq(state.z)
        v1 = cfg.p1 * v + cfg.p2 * lap_sq + self.history_term(state) if cfg.monitor_v1 else math.nan
        return MonitorRow(t=state.t, V=v, V1=v1, c0=c0_norm(state.z), lap_sq=lap_sq)


def run_steps(stepper: KseStepper, state: SimState, n: int) -> SimState:
    """Advance n steps, stopping early on blow-up"""
    for _ in range(n):
        state = stepper.step(state)
        if state.blowup:
            break
    return state

