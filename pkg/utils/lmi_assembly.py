"""
Exact assembly of the stability LMIs.

Every assemble_* function maps problem parameters and a Certificate (decision
variable values) to numeric symmetric matrices. The matrices are affine in the
decision variables once the state vertex z is fixed, which is what the solver's
affine decomposition relies on.
"""

import math
from typing import Dict, NamedTuple, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from models.errors import AssemblyError
from models.schemas import (
    Certificate,
    ContinuousAvgParams,
    SampledAvgParams,
    SampledPointParams,
)

PI2 = math.pi ** 2


class LmiBasis(BaseModel):
    """Names of the slots of the quadratic-form vector an LMI block acts on"""
    model_config = ConfigDict(frozen=True)

    name: str
    slots: Tuple[str, ...]

    @property
    def dim(self) -> int:
        return len(self.slots)


_STATE_SLOTS = ("z_x1", "z_x2", "z_x1x1", "z_x2x2", "bilap_z", "z")

BASES: Dict[str, LmiBasis] = {
    b.name: b for b in (
        LmiBasis(name="prop1", slots=("z", "lap_z", "f_j")),
        LmiBasis(name="prop2", slots=("z", "z_x1x1", "z_x2x2", "f_j")),
        LmiBasis(name="thm1_eta1", slots=_STATE_SLOTS + ("f_j",)),
        LmiBasis(name="thm1_eta2", slots=_STATE_SLOTS + ("f_j", "g_j")),
        LmiBasis(name="thm2_eta0", slots=_STATE_SLOTS + ("f_j",)),
        LmiBasis(name="thm2_eta1", slots=_STATE_SLOTS + ("f_j", "rho")),
    )
}

PROP1_VARS = ("lambda1", "lambda2")
PROP2_VARS = ("eta", "lambda1", "lambda2", "beta1", "beta2", "beta3")
THM1_VARS = ("r", "gamma", "p1", "p2", "lambda1", "lambda2", "lambda3")
THM2_VARS = ("r", "gamma", "p1", "p2", "eta", "lambda1", "lambda2", "beta1", "beta2", "beta3")


class Prop2Blocks(NamedTuple):
    x1_curvature: np.ndarray
    x2_curvature: np.ndarray
    lam: np.ndarray
    point_weights: np.ndarray


class Thm1Blocks(NamedTuple):
    xi1: np.ndarray
    xi2: np.ndarray
    energy: np.ndarray


class Thm2Blocks(NamedTuple):
    mixed_curvature: np.ndarray
    delayed: np.ndarray
    energy: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    point_weights: np.ndarray


def sym_from_upper(n: int, entries: Dict[Tuple[int, int], float]) -> np.ndarray:
    """Symmetric n x n matrix from 1-based upper-triangle entries; each entry written once and mirrored"""
    a = np.zeros((n, n))
    for (i, j), value in entries.items():
        if i > j:
            raise AssemblyError(f"entry ({i},{j}) is below the diagonal")
        a[i - 1, j - 1] = value
        a[j - 1, i - 1] = value
    return a


def _check_basis(a: np.ndarray, basis: str, extra: int = 0) -> np.ndarray:
    expected = BASES[basis].dim + extra
    if a.shape != (expected, expected):
        raise AssemblyError(f"{basis} block has shape {a.shape}, expected {expected}x{expected}")
    return a


def _check_vertex(z_vertex: float, c_bound: float) -> None:
    if abs(abs(z_vertex) - c_bound) > 1e-12 * c_bound:
        raise AssemblyError(f"z_vertex={z_vertex} is not a vertex of [-{c_bound}, {c_bound}]")


def _bordered(core: np.ndarray, column: np.ndarray, corner: float) -> np.ndarray:
    n = core.shape[0]
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = core
    out[:n, n] = column
    out[n, :n] = column
    out[n, n] = corner
    return out


def _point_weight_matrix(v: Certificate) -> np.ndarray:
    return np.diag([v["beta1"], v["beta2"], v["beta3"]]) - v["eta"] * np.ones((3, 3))


def assemble_prop1(p: ContinuousAvgParams, v: Certificate) -> np.ndarray:
    """Continuous averaged measurements; mu is read from the certificate when it is a decision variable"""
    v.require(list(PROP1_VARS))
    mu = v.get("mu", p.mu)
    l1, l2 = v["lambda1"], v["lambda2"]
    u12 = -l1 / 2.0 - l2 * p.delta_bar ** 2 / PI2 - (1.0 - p.kappa)
    a = sym_from_upper(3, {
        (1, 1): -2.0 * mu + 2.0 * p.delta - l1 * PI2 / 2.0,
        (1, 2): u12,
        (1, 3): mu,
        (2, 2): -2.0,
        (3, 3): -l2,
    })
    return _check_basis(a, "prop1")


def assemble_prop2(p: ContinuousAvgParams, v: Certificate) -> Prop2Blocks:
    """Continuous point measurements: two scalar conditions, the 4x4 block and the weight condition"""
    v.require(list(PROP2_VARS))
    l1, l2 = v["lambda1"], v["lambda2"]
    s2 = (p.delta_bar / math.pi) ** 2
    x1_curvature = 2.0 * (1.0 - p.kappa) + v["beta1"] * s2 + l1 - l2
    x2_curvature = -2.0 * p.kappa + v["beta2"] * s2 + l1 - l2
    lam = sym_from_upper(4, {
        (1, 1): -2.0 * p.mu + 2.0 * p.delta - l1 * PI2 / 2.0,
        (1, 2): -l2 / 2.0,
        (1, 3): -l2 / 2.0,
        (1, 4): p.mu,
        (2, 2): -2.0,
        (2, 3): -2.0 + v["beta3"] / 2.0 * s2 ** 2,
        (3, 3): -2.0,
        (4, 4): -v["eta"],
    })
    return Prop2Blocks(
        x1_curvature=np.array([[x1_curvature]]),
        x2_curvature=np.array([[x2_curvature]]),
        lam=_check_basis(lam, "prop2"),
        point_weights=_point_weight_matrix(v),
    )


def _state_block(p: SampledAvgParams, v: Certificate, z: float, diag_mult: float, cross: str,
                 last: float, with_34: bool) -> np.ndarray:
    """
    7x7 block shared by both sampled-data conditions.

    `diag_mult` is the multiplier term of the (1,1) and (2,2) entries, `cross`
    names the multiplier of the (3,6) and (4,6) entries, `last` is the (7,7) entry.
    """
    p1, p2 = v["p1"], v["p2"]
    mu, kappa, delta = p.mu, p.kappa, p.delta
    l1 = v["lambda1"]
    entries = {
        (1, 1): 2.0 * p1 * (1.0 - kappa) + l1 + diag_mult,
        (1, 5): -p2 * z,
        (2, 2): -2.0 * p1 * kappa + l1 + diag_mult,
        (3, 3): -2.0 * p1 + 2.0 * delta * p2,
        (3, 5): -p2 * (1.0 - kappa),
        (3, 6): -v[cross] / 2.0,
        (4, 4): -2.0 * p1 + 2.0 * delta * p2,
        (4, 5): p2 * kappa,
        (4, 6): -v[cross] / 2.0,
        (5, 5): -2.0 * p2,
        (5, 6): -p2 * mu,
        (5, 7): p2 * mu,
        (6, 6): -2.0 * p1 * mu + 2.0 * delta * p1 - PI2 / 2.0 * l1,
        (6, 7): p1 * mu,
        (7, 7): last,
    }
    if with_34:
        entries[(3, 4)] = 2.0 * delta * p2
    return sym_from_upper(7, entries)


def _sampling_blocks(p: SampledAvgParams, v: Certificate, z: float, core: np.ndarray,
                     basis1: str, basis2: str) -> Tuple[np.ndarray, np.ndarray]:
    """Border the 7x7 core into the two Schur-complement blocks of the sampled-data conditions"""
    r, h, mu, kappa = v["r"], p.h, p.mu, p.kappa
    _check_basis(core, basis1)
    column = np.array([-r * h * z, 0.0, -(1.0 - kappa) * r * h, kappa * r * h, -r * h, -mu * r * h, mu * r * h])
    first = _bordered(core, column, -r * h)

    row = np.array([0.0, 0.0, 0.0, 0.0, v["p2"] * mu * h, v["p1"] * mu * h, 0.0])
    extended = _check_basis(_bordered(core, row, -r * h * math.exp(-2.0 * p.delta * h)), basis2)
    second = _bordered(extended, np.append(column, mu * r * h ** 2), -r * h)
    return first, second


def _energy_block(v: Certificate) -> np.ndarray:
    """2x2 block tying p2 and Gamma to the pointwise state bound"""
    return sym_from_upper(2, {
        (1, 1): v["p2"] - (1.0 + v["gamma"]) / PI2,
        (1, 2): math.sqrt(0.5),
        (2, 2): v["gamma"],
    })


def assemble_thm1(p: SampledAvgParams, v: Certificate, z_vertex: float) -> Thm1Blocks:
    """Sampled averaged measurements at one vertex z = +C or -C"""
    v.require(list(THM1_VARS))
    _check_vertex(z_vertex, p.c_bound)
    s = 2.0 * p.delta_bar ** 2 / PI2
    phi1 = _state_block(p, v, z_vertex, diag_mult=s * v["lambda2"] - v["lambda3"], cross="lambda3",
                        last=-v["lambda2"], with_34=True)
    xi1, xi2 = _sampling_blocks(p, v, z_vertex, phi1, "thm1_eta1", "thm1_eta2")
    return Thm1Blocks(xi1=xi1, xi2=xi2, energy=_energy_block(v))


def assemble_thm2(p: SampledPointParams, v: Certificate, z_vertex: float) -> Thm2Blocks:
    """Sampled point measurements at one vertex z = +C or -C"""
    v.require(list(THM2_VARS))
    _check_vertex(z_vertex, p.c_bound)
    p2 = v["p2"]
    s2 = (p.delta_bar / math.pi) ** 2
    mixed_curvature = -2.0 * p.delta1 * p2 + v["beta3"] * s2 ** 2
    delayed = sym_from_upper(3, {
        (1, 1): -p.delta1 * p2,
        (1, 2): -v["beta1"] / 2.0 * s2,
        (1, 3): -v["beta2"] / 2.0 * s2,
        (2, 2): -p.delta1 * p2,
        (3, 3): -p.delta1 * p2,
    })
    theta0 = _state_block(p, v, z_vertex, diag_mult=-v["lambda2"], cross="lambda2",
                          last=-v["eta"], with_34=False)
    lam1, lam2 = _sampling_blocks(p, v, z_vertex, theta0, "thm2_eta0", "thm2_eta1")
    return Thm2Blocks(
        mixed_curvature=np.array([[mixed_curvature]]),
        delayed=delayed,
        energy=_energy_block(v),
        lam1=lam1,
        lam2=lam2,
        point_weights=_point_weight_matrix(v),
    )
