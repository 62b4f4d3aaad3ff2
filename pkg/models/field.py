"""
Grid, field and subdomain-partition models on the unit square
"""

from typing import Callable, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydField, field_validator, model_validator

from models.errors import ConfigurationError, PreconditionError


class Grid2D(BaseModel):
    """Uniform grid on [0,1]^2 with (m+1)^2 nodes; dx is derived from m"""
    model_config = ConfigDict(frozen=True)

    m: int = PydField(..., ge=8, description="Node intervals per side")

    @property
    def dx(self) -> float:
        return 1.0 / self.m

    @property
    def n(self) -> int:
        """Nodes per side"""
        return self.m + 1

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n, self.n)

    def coordinates(self) -> np.ndarray:
        """1D node coordinates i*dx, i = 0..m"""
        return np.arange(self.n) / self.m

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """(x1, x2) node coordinates indexed [i, j]"""
        x = self.coordinates()
        return np.meshgrid(x, x, indexing="ij")


class Field(BaseModel):
    """
    Scalar node values on a Grid2D.

    `values` is the flat row-major array over (i, j), x1 = i*dx, x2 = j*dx.
    Instances are immutable: the array is stored read-only.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid2D
    values: np.ndarray
    clamped: bool = True

    @field_validator("values", mode="before")
    @classmethod
    def _as_float_array(cls, v):
        arr = np.array(v, dtype=np.float64).reshape(-1)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.values.size != self.grid.n * self.grid.n:
            raise ValueError(
                f"expected {self.grid.n ** 2} values for m={self.grid.m}, got {self.values.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.clamped:
            a = self.values.reshape(self.grid.shape)
            if (np.any(a[0, :] != 0.0) or np.any(a[-1, :] != 0.0)
                    or np.any(a[:, 0] != 0.0) or np.any(a[:, -1] != 0.0)):
                raise ValueError("clamped field must vanish on every boundary node")
        return self

    @property
    def array(self) -> np.ndarray:
        """Read-only (m+1, m+1) view indexed [i, j]"""
        return self.values.reshape(self.grid.shape)

    @classmethod
    def from_array(cls, grid: Grid2D, array: np.ndarray, clamped: bool = True) -> "Field":
        return cls(grid=grid, values=np.asarray(array), clamped=clamped)

    @classmethod
    def zeros(cls, grid: Grid2D) -> "Field":
        return cls(grid=grid, values=np.zeros(grid.n * grid.n), clamped=True)

    @classmethod
    def from_function(
        cls,
        grid: Grid2D,
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        clamped: bool = True,
    ) -> "Field":
        """
        Sample fn(x1, x2) on the nodes.

        With clamped=True the boundary nodes are set to exactly 0, which absorbs
        round-off such as sin(pi * 1.0) != 0.
        """
        x1, x2 = grid.mesh()
        a = np.array(np.broadcast_to(fn(x1, x2), grid.shape), dtype=np.float64)
        if clamped:
            a[0, :] = a[-1, :] = 0.0
            a[:, 0] = a[:, -1] = 0.0
        return cls(grid=grid, values=a, clamped=clamped)

    def scaled(self, c: float) -> "Field":
        return Field(grid=self.grid, values=c * self.values, clamped=self.clamped)

    def __add__(self, other: "Field") -> "Field":
        if other.grid != self.grid:
            raise PreconditionError("fields live on different grids")
        return Field(grid=self.grid, values=self.values + other.values,
                     clamped=self.clamped and other.clamped)


class Subdomain(BaseModel):
    """Square subdomain [x1_min, x1_max] x [x2_min, x2_max] with center x̄_j"""
    model_config = ConfigDict(frozen=True)

    j: int
    x1_range: Tuple[float, float]
    x2_range: Tuple[float, float]
    block: Tuple[int, int] = PydField(..., description="(a, b) block position, j = a*n_side + b")

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * (self.x1_range[0] + self.x1_range[1]),
                0.5 * (self.x2_range[0] + self.x2_range[1]))


class Partition(BaseModel):
    """The N = n_side^2 square subdomains of side delta_bar tiling the unit square"""
    model_config = ConfigDict(frozen=True)

    delta_bar: float = PydField(..., gt=0.0, le=1.0)
    n_side: int = PydField(..., ge=1)
    subdomains: List[Subdomain]

    @model_validator(mode="after")
    def _check_tiling(self):
        if abs(self.n_side * self.delta_bar - 1.0) > 1e-12:
            raise ValueError("n_side * delta_bar must equal 1")
        if len(self.subdomains) != self.n_side ** 2:
            raise ValueError("partition must hold n_side^2 subdomains")
        return self

    @classmethod
    def build(cls, delta_bar: float) -> "Partition":
        n_side = int(round(1.0 / delta_bar))
        if n_side < 1 or abs(n_side * delta_bar - 1.0) > 1e-12:
            raise ConfigurationError(f"1/delta_bar must be an integer, got delta_bar={delta_bar}")
        subs = []
        for a in range(n_side):
            for b in range(n_side):
                subs.append(Subdomain(
                    j=a * n_side + b,
                    x1_range=(a / n_side, (a + 1) / n_side),
                    x2_range=(b / n_side, (b + 1) / n_side),
                    block=(a, b),
                ))
        return cls(delta_bar=1.0 / n_side, n_side=n_side, subdomains=subs)

    @property
    def N(self) -> int:
        return self.n_side ** 2

    def check_alignment(self, grid: Grid2D, centers: bool = False) -> int:
        """
        Return the number of grid cells per subdomain side.

        Edges must lie on grid lines; with centers=True the subdomain centers
        must be nodes as well (m divisible by 2*n_side).
        """
        divisor = 2 * self.n_side if centers else self.n_side
        if grid.m % divisor != 0:
            what = "centers on grid nodes" if centers else "subdomain edges on grid lines"
            raise ConfigurationError(
                f"m={grid.m} is not divisible by {divisor} ({what}, n_side={self.n_side})"
            )
        return grid.m // self.n_side

    def closed_slices(self, grid: Grid2D, s: Subdomain) -> Tuple[slice, slice]:
        """Node index slices covering the closed subdomain"""
        cells = self.check_alignment(grid)
        a, b = s.block
        return (slice(a * cells, (a + 1) * cells + 1), slice(b * cells, (b + 1) * cells + 1))

    def center_index(self, grid: Grid2D, s: Subdomain) -> Tuple[int, int]:
        try:
            cells = self.check_alignment(grid, centers=True)
        except ConfigurationError as e:
            raise PreconditionError(f"subdomain {s.j} center is off-grid: {e}") from e
        a, b = s.block
        half = cells // 2
        return (a * cells + half, b * cells + half)

    def owner_map(self, grid: Grid2D) -> np.ndarray:
        """
        (m+1, m+1) integer array of the owning subdomain of each node.

        Ownership is half-open [min, max) per axis except that the last
        block also owns the closing grid line, so every node has exactly one owner.
        """
        cells = self.check_alignment(grid)
        blocks = np.minimum(np.arange(grid.n) // cells, self.n_side - 1)
        return blocks[:, None] * self.n_side + blocks[None, :]
