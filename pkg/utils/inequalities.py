"""
Numerical oracles for the functional inequalities used by the stability analysis,
and the Halanay decay-rate solver.

Every check returns an InequalityMargin(bound, margin, tol): `bound` is the
right-hand side, `margin` = bound - lhs, and the check holds when margin >= -tol.
The tolerance absorbs the O(dx^2) operator and quadrature error of the grid.
"""

import math
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from models.errors import PreconditionError
from models.field import Field, Grid2D, Partition, Subdomain
from models.schemas import FriedrichWeights, HalanayParams, PointBoundWeights
from utils.field_ops import (
    block_derivatives,
    block_quadrature,
    c0_norm,
    dx1,
    dx1x2,
    dx2,
    l2_sq,
    laplacian_sq,
    subdomain_block,
    subdomain_mean,
)

MODE_CUTOFF = 6


class InequalityMargin(NamedTuple):
    bound: float
    margin: float
    tol: float

    @property
    def holds(self) -> bool:
        return self.margin >= -self.tol


def tol_quad(grid: Grid2D, bound: float) -> float:
    return 10.0 * grid.dx ** 2 * abs(bound)


def _result(grid: Grid2D, bound: float, lhs: float) -> InequalityMargin:
    return InequalityMargin(bound=bound, margin=bound - lhs, tol=tol_quad(grid, bound))


def halanay_sigma(p: HalanayParams) -> float:
    """
    Unique root of g(s) = s - delta + (delta1/2) exp(2 s h) on [0, delta - delta1/2].

    g is strictly increasing, negative at 0 and nonnegative at the right end.
    """
    if p.delta1 == 0.0:
        return p.delta
    upper = p.delta - 0.5 * p.delta1
    if p.h == 0.0:
        return upper

    log_half = math.log(0.5 * p.delta1)

    # log form of g = 0, finite for every h; decreasing, positive at 0 and -2 h upper at upper
    def log_g(s: float) -> float:
        return math.log(p.delta - s) - log_half - 2.0 * s * p.h

    return brentq(log_g, 0.0, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def halanay_residual(p: HalanayParams, sigma: float) -> float:
    return sigma - p.delta + 0.5 * p.delta1 * math.exp(2.0 * sigma * p.h)


def halanay_decay_bound(v_sup: float, sigma: float, t: float) -> float:
    """Envelope exp(-2 sigma t) * sup V guaranteed by Halanay's inequality"""
    if v_sup < 0 or t < 0:
        raise PreconditionError(f"halanay_decay_bound needs v_sup >= 0 and t >= 0, got {v_sup}, {t}")
    return math.exp(-2.0 * sigma * t) * v_sup


def check_wirtinger(f: Field) -> InequalityMargin:
    """||f||^2 <= (2/pi^2) ||grad f||^2 on the unit square for clamped f"""
    if not f.clamped:
        raise PreconditionError("check_wirtinger requires a clamped field")
    grad_sq = l2_sq(dx1(f)) + l2_sq(dx2(f))
    return _result(f.grid, (2.0 / math.pi ** 2) * grad_sq, l2_sq(f))


def check_poincare(f: Field, s: Subdomain, partition: Partition) -> InequalityMargin:
    """
    ||f||^2 <= (2 delta_bar^2 / pi^2) ||grad f||^2 over the subdomain s.

    f must have zero mean over s, e.g. a residual_f_j in averaged mode.
    """
    mean = subdomain_mean(f, s, partition)
    block = subdomain_block(f, s, partition)
    scale = float(np.max(np.abs(block))) if block.size else 0.0
    if abs(mean) > 1e-10 * max(scale, 1.0):
        raise PreconditionError(f"check_poincare needs a zero-mean field on subdomain {s.j}, mean={mean:.3e}")
    g1, g2, _ = block_derivatives(f, s, partition)
    h = f.grid.dx
    grad_sq = block_quadrature(g1 ** 2 + g2 ** 2, h)
    const = 2.0 * partition.delta_bar ** 2 / math.pi ** 2
    return _result(f.grid, const * grad_sq, block_quadrature(block ** 2, h))


def _corner_square(f: Field, s: Optional[Subdomain], partition: Optional[Partition]):
    """
    Node block, derivative blocks and side length of the square the corner lemmas act on.

    With no subdomain the square is the whole unit square.
    """
    if s is None:
        if not f.clamped:
            raise PreconditionError("the unit-square form needs a clamped field")
        a = f.array
        derivs = (dx1(f).array, dx2(f).array, dx1x2(f).array)
        side = 1.0
    else:
        if partition is None:
            raise PreconditionError("a subdomain needs its partition")
        a = subdomain_block(f, s, partition)
        derivs = block_derivatives(f, s, partition)
        side = partition.delta_bar
    scale = float(np.max(np.abs(a)))
    if abs(a[0, 0]) > 1e-12 * max(scale, 1.0):
        raise PreconditionError(f"corner value must vanish, got {a[0, 0]:.3e}")
    h = f.grid.dx
    norms = tuple(block_quadrature(d ** 2, h) for d in derivs)
    return block_quadrature(a ** 2, h), norms, side


def check_friedrich(
    f: Field,
    w: FriedrichWeights,
    s: Optional[Subdomain] = None,
    partition: Optional[Partition] = None,
) -> InequalityMargin:
    """Friedrich-type bound with convex weights on a square with f(0,0) = 0"""
    lhs, (n1, n2, n12), side = _corner_square(f, s, partition)
    c = (2.0 * side / math.pi) ** 2
    bound = c * n1 / w.alpha1 + c * n2 / w.alpha2 + c * c * n12 / w.alpha3
    return _result(f.grid, bound, lhs)


def check_point_bound(
    f: Field,
    w: PointBoundWeights,
    s: Optional[Subdomain] = None,
    partition: Optional[Partition] = None,
) -> InequalityMargin:
    """eta ||f||^2 bounded by the beta-weighted derivative norms; weights are validated by PointBoundWeights"""
    lhs, (n1, n2, n12), side = _corner_square(f, s, partition)
    c = (2.0 * side / math.pi) ** 2
    bound = w.beta1 * c * n1 + w.beta2 * c * n2 + w.beta3 * c * c * n12
    return _result(f.grid, bound, w.eta * lhs)


def sobolev2d_bound(f: Field, gamma: float) -> InequalityMargin:
    """C0 bound ||f||_C0^2 <= (1+G)/2 ||grad f||^2 + (1/G) ||f_x1x2||^2"""
    if gamma <= 0:
        raise PreconditionError(f"Gamma must be positive, got {gamma}")
    if not f.clamped:
        raise PreconditionError("sobolev2d_bound requires a clamped field")
    grad_sq = l2_sq(dx1(f)) + l2_sq(dx2(f))
    bound = 0.5 * (1.0 + gamma) * grad_sq + l2_sq(dx1x2(f)) / gamma
    return _result(f.grid, bound, c0_norm(f) ** 2)


def sobolev_energy_bound(f: Field, gamma: float) -> InequalityMargin:
    """
    C0 bound in terms of the Laplacian alone: ((1+G)/pi^2 + 1/(2G)) ||Laplacian f||^2.

    This is the chain that turns p2 ||Laplacian z||^2 < V1 into a pointwise state bound.
    """
    if gamma <= 0:
        raise PreconditionError(f"Gamma must be positive, got {gamma}")
    factor = (1.0 + gamma) / math.pi ** 2 + 1.0 / (2.0 * gamma)
    bound = factor * laplacian_sq(f)
    return _result(f.grid, bound, c0_norm(f) ** 2)


def random_clamped_field(grid: Grid2D, rng: np.random.Generator) -> Field:
    """
    Sum of sin(k pi x1) sin(l pi x2), k, l = 1..6, with U[-1, 1] coefficients scaled by 1/(k^2 + l^2).

    Draws exactly one 6x6 coefficient block from rng, so a seeded generator gives
    a reproducible sequence of fields.
    """
    k = np.arange(1, MODE_CUTOFF + 1)
    coeffs = rng.uniform(-1.0, 1.0, size=(MODE_CUTOFF, MODE_CUTOFF)) / (k[:, None] ** 2 + k[None, :] ** 2)
    x = grid.coordinates()
    modes = np.sin(np.pi * k[:, None] * x[None, :])
    a = modes.T @ coeffs @ modes
    a[0, :] = a[-1, :] = 0.0
    a[:, 0] = a[:, -1] = 0.0
    return Field.from_array(grid, a)
