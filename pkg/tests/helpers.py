"""
Analytic test fields
"""

import numpy as np

from models.field import Field, Grid2D


def sinsin(grid: Grid2D, amplitude: float = 1.0) -> Field:
    return Field.from_function(grid, lambda x1, x2: amplitude * np.sin(np.pi * x1) * np.sin(np.pi * x2))


def quartic(grid: Grid2D) -> Field:
    """x1^2 (1-x1)^2 x2^2 (1-x2)^2, which satisfies both clamped conditions"""
    return Field.from_function(grid, lambda x1, x2: x1 ** 2 * (1 - x1) ** 2 * x2 ** 2 * (1 - x2) ** 2)


def quartic_biharmonic(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    a, b = x1 ** 2 * (1 - x1) ** 2, x2 ** 2 * (1 - x2) ** 2
    a2, b2 = 2 - 12 * x1 + 12 * x1 ** 2, 2 - 12 * x2 + 12 * x2 ** 2
    return 24.0 * b + 2.0 * a2 * b2 + 24.0 * a


def constant(grid: Grid2D, c: float) -> Field:
    return Field.from_function(grid, lambda x1, x2: c + 0.0 * x1, clamped=False)
