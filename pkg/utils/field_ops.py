"""
Finite-difference operators, quadrature norms and subdomain measurements on clamped fields

Clamped boundary conditions (z = 0 and dz/dn = 0 on the boundary) are encoded by
ghost reflection z_{-1} = z_1 across every boundary line, which numpy's
"reflect" padding produces directly.
"""

from pathlib import Path
from typing import Literal, Tuple

import numpy as np
import scipy.sparse as sps

from models.errors import PreconditionError
from models.field import Field, Grid2D, Partition, Subdomain
from utils.logger import get_logger

logger = get_logger(__name__)

MeasurementMode = Literal["averaged", "point"]


def _require_clamped(f: Field, op: str) -> None:
    if not f.clamped:
        raise PreconditionError(f"{op} requires a clamped field")


def _ghost(f: Field) -> np.ndarray:
    """Values padded by one ghost layer, P[k] = a[k-1], P[-1 ghost] = a[1]"""
    return np.pad(f.array, 1, mode="reflect")


def _derived(f: Field, values: np.ndarray) -> Field:
    return Field(grid=f.grid, values=values, clamped=False)


def laplacian(f: Field) -> Field:
    """
    5-point Laplacian.

    Boundary nodes use the ghost values too, giving the one-sided value
    2*z_1/dx^2 on an edge and 0 at a corner.
    """
    _require_clamped(f, "laplacian")
    p = _ghost(f)
    h2 = f.grid.dx ** 2
    out = (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4.0 * p[1:-1, 1:-1]) / h2
    return _derived(f, out)


def biharmonic(f: Field) -> Field:
    """
    13-point biharmonic stencil on interior nodes; boundary nodes of the result are 0.

    The grid is guaranteed to have m >= 8 by Grid2D.
    """
    _require_clamped(f, "biharmonic")
    p = _ghost(f)
    m = f.grid.m
    h4 = f.grid.dx ** 4
    # interior node i (1..m-1) sits at padded index i+1
    c = slice(2, m + 1)
    e1, w1 = slice(3, m + 2), slice(1, m)
    e2, w2 = slice(4, m + 3), slice(0, m - 1)
    out = np.zeros(f.grid.shape)
    out[1:-1, 1:-1] = (
        20.0 * p[c, c]
        - 8.0 * (p[e1, c] + p[w1, c] + p[c, e1] + p[c, w1])
        + 2.0 * (p[e1, e1] + p[e1, w1] + p[w1, e1] + p[w1, w1])
        + (p[e2, c] + p[w2, c] + p[c, e2] + p[c, w2])
    ) / h4
    return _derived(f, out)


def dx1(f: Field) -> Field:
    _require_clamped(f, "dx1")
    p = _ghost(f)
    return _derived(f, (p[2:, 1:-1] - p[:-2, 1:-1]) / (2.0 * f.grid.dx))


def dx2(f: Field) -> Field:
    _require_clamped(f, "dx2")
    p = _ghost(f)
    return _derived(f, (p[1:-1, 2:] - p[1:-1, :-2]) / (2.0 * f.grid.dx))


def dx1x2(f: Field) -> Field:
    _require_clamped(f, "dx1x2")
    p = _ghost(f)
    out = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / (4.0 * f.grid.dx ** 2)
    return _derived(f, out)


def dx1x1(f: Field) -> Field:
    _require_clamped(f, "dx1x1")
    p = _ghost(f)
    return _derived(f, (p[2:, 1:-1] - 2.0 * p[1:-1, 1:-1] + p[:-2, 1:-1]) / f.grid.dx ** 2)


def dx2x2(f: Field) -> Field:
    _require_clamped(f, "dx2x2")
    p = _ghost(f)
    return _derived(f, (p[1:-1, 2:] - 2.0 * p[1:-1, 1:-1] + p[1:-1, :-2]) / f.grid.dx ** 2)


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def block_quadrature(block: np.ndarray, dx: float) -> float:
    """Trapezoidal integral of node values over a rectangular block of nodes"""
    w1 = trapezoid_weights(block.shape[0])
    w2 = trapezoid_weights(block.shape[1])
    return float(dx * dx * (w1 @ block @ w2))


def l2_sq(f: Field) -> float:
    """||f||^2 over the unit square by the trapezoidal rule"""
    return block_quadrature(f.array ** 2, f.grid.dx)


def laplacian_sq(f: Field) -> float:
    """
    ||Laplacian f||^2 from interior nodes only.

    Boundary values of laplacian() carry the one-sided ghost term 2*z_1/dx^2,
    which grows like 1/dx when dz/dn != 0 and does not converge under refinement.
    """
    lap = laplacian(f).array[1:-1, 1:-1]
    return float(f.grid.dx ** 2 * np.sum(lap * lap))


def c0_norm(f: Field) -> float:
    return float(np.max(np.abs(f.values)))


def subdomain_block(f: Field, s: Subdomain, partition: Partition) -> np.ndarray:
    """Node values on the closed subdomain"""
    try:
        rows, cols = partition.closed_slices(f.grid, s)
    except Exception as e:
        raise PreconditionError(f"grid is not aligned with the partition: {e}") from e
    return f.array[rows, cols]


def subdomain_mean(f: Field, s: Subdomain, partition: Partition) -> float:
    block = subdomain_block(f, s, partition)
    return block_quadrature(block, f.grid.dx) / partition.delta_bar ** 2


def point_value(f: Field, s: Subdomain, partition: Partition) -> float:
    i, j = partition.center_index(f.grid, s)
    return float(f.array[i, j])


def measure(f: Field, s: Subdomain, partition: Partition, mode: MeasurementMode) -> float:
    if mode == "averaged":
        return subdomain_mean(f, s, partition)
    if mode == "point":
        return point_value(f, s, partition)
    raise PreconditionError(f"unknown measurement mode: {mode}")


def residual_f_j(f: Field, s: Subdomain, partition: Partition, mode: MeasurementMode) -> Field:
    """
    f minus its measurement on the closed subdomain s, zero elsewhere.

    The result is a diagnostic field; it is not clamped.
    """
    y = measure(f, s, partition, mode)
    rows, cols = partition.closed_slices(f.grid, s)
    out = np.zeros(f.grid.shape)
    out[rows, cols] = f.array[rows, cols] - y
    if mode == "point":
        i, j = partition.center_index(f.grid, s)
        out[i, j] = 0.0
    return Field(grid=f.grid, values=out, clamped=False)


def block_derivatives(
    f: Field, s: Subdomain, partition: Partition
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (f_x1, f_x2, f_x1x2) on the closed subdomain.

    Clamped fields reuse the ghost-reflection stencils; other fields use
    second-order one-sided differences at the block edges.
    """
    rows, cols = partition.closed_slices(f.grid, s)
    if f.clamped:
        return (dx1(f).array[rows, cols], dx2(f).array[rows, cols], dx1x2(f).array[rows, cols])
    block = f.array[rows, cols]
    h = f.grid.dx
    g1, g2 = np.gradient(block, h, edge_order=2)
    g12 = np.gradient(g1, h, axis=1, edge_order=2)
    return g1, g2, g12


# Sparse operators on the (m-1)^2 interior unknowns, ordered row-major over (i, j)

def second_difference_1d(grid: Grid2D) -> sps.csr_matrix:
    """Dirichlet second difference on the m-1 interior nodes"""
    k = grid.m - 1
    return sps.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(k, k), format="csr") / grid.dx ** 2


def fourth_difference_1d(grid: Grid2D) -> sps.csr_matrix:
    """Clamped fourth difference; the ghost z_{-1} = z_1 adds 1 to the first and last diagonal"""
    k = grid.m - 1
    main = np.full(k, 6.0)
    main[0] = main[-1] = 7.0
    d4 = sps.diags([1.0, -4.0, main, -4.0, 1.0], [-2, -1, 0, 1, 2], shape=(k, k), format="csr")
    return d4 / grid.dx ** 4


def interior_operators(grid: Grid2D) -> Tuple[sps.csr_matrix, sps.csr_matrix, sps.csr_matrix]:
    """(D11, D22, biharmonic) acting on interior unknowns"""
    k = grid.m - 1
    eye = sps.identity(k, format="csr")
    d2 = second_difference_1d(grid)
    d4 = fourth_difference_1d(grid)
    d11 = sps.kron(d2, eye, format="csr")
    d22 = sps.kron(eye, d2, format="csr")
    bih = (sps.kron(d4, eye) + 2.0 * sps.kron(d2, d2) + sps.kron(eye, d4)).tocsr()
    return d11, d22, bih


def interior_values(f: Field) -> np.ndarray:
    return f.array[1:-1, 1:-1].reshape(-1)


def from_interior(grid: Grid2D, u: np.ndarray) -> np.ndarray:
    """Embed interior unknowns into a full node array with zero boundary"""
    a = np.zeros(grid.shape)
    a[1:-1, 1:-1] = u.reshape(grid.m - 1, grid.m - 1)
    return a


def dump_field_csv(f: Field, path: Path) -> Path:
    """Write `x1,x2,value` rows in row-major node order with 17 significant digits"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x1, x2 = f.grid.mesh()
    rows = np.column_stack([x1.reshape(-1), x2.reshape(-1), f.values])
    np.savetxt(path, rows, delimiter=",", header="x1,x2,value", comments="", fmt="%.17g")
    logger.debug(f"Field dump written: {path}")
    return path


def load_field_csv(path: Path, clamped: bool = True) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = int(round(np.sqrt(data.shape[0])))
    if n * n != data.shape[0]:
        raise PreconditionError(f"{path}: row count {data.shape[0]} is not a square grid")
    return Field(grid=Grid2D(m=n - 1), values=data[:, 2], clamped=clamped)
