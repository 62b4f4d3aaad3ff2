"""
Tests for grid fields, stencils, quadrature and subdomain measurements
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from pydantic import ValidationError

from models.errors import ConfigurationError, PreconditionError
from models.field import Field, Grid2D, Partition
from utils.field_ops import (
    biharmonic,
    block_quadrature,
    c0_norm,
    dump_field_csv,
    dx1,
    dx1x1,
    dx1x2,
    dx2,
    dx2x2,
    l2_sq,
    laplacian,
    laplacian_sq,
    load_field_csv,
    point_value,
    residual_f_j,
    subdomain_mean,
)
from utils.inequalities import random_clamped_field
from tests.helpers import constant, quartic, quartic_biharmonic, sinsin

OPERATORS = [laplacian, biharmonic, dx1, dx2, dx1x2, dx1x1, dx2x2]


def _laplacian_error(m: int) -> float:
    grid = Grid2D(m=m)
    f = sinsin(grid)
    err = laplacian(f).array + 2.0 * math.pi ** 2 * f.array
    return float(np.max(np.abs(err[1:-1, 1:-1])))


def _biharmonic_error(m: int) -> float:
    """Max error on the nodes of [1/8, 7/8]^2, a node set shared by every tested m"""
    grid = Grid2D(m=m)
    x1, x2 = grid.mesh()
    err = biharmonic(quartic(grid)).array - quartic_biharmonic(x1, x2)
    lo, hi = m // 8, m - m // 8
    return float(np.max(np.abs(err[lo:hi + 1, lo:hi + 1])))


def test_grid_rejects_small_m():
    with pytest.raises(ValidationError):
        Grid2D(m=4)


def test_clamped_field_rejects_boundary_values(grid64):
    a = np.zeros(grid64.shape)
    a[0, 5] = 1.0
    with pytest.raises(ValidationError):
        Field.from_array(grid64, a)


def test_field_rejects_non_finite(grid64):
    a = np.zeros(grid64.shape)
    a[3, 3] = np.nan
    with pytest.raises(ValidationError):
        Field.from_array(grid64, a, clamped=False)


@pytest.mark.parametrize("op", OPERATORS)
def test_operators_vanish_on_zero_field(op, grid64):
    assert np.all(op(Field.zeros(grid64)).values == 0.0)


@pytest.mark.parametrize("op", OPERATORS)
def test_operators_reject_unclamped_input(op, grid64):
    with pytest.raises(PreconditionError):
        op(constant(grid64, 1.0))


def test_laplacian_of_sinsin(grid64):
    assert _laplacian_error(64) <= 0.02 * 2.0 * math.pi ** 2


def test_laplacian_convergence_ratio():
    ratio = _laplacian_error(32) / _laplacian_error(64)
    assert 3.5 <= ratio <= 4.5


def test_biharmonic_matches_polynomial_oracle():
    assert _biharmonic_error(64) < 5e-3


def test_biharmonic_convergence_ratio():
    ratio = _biharmonic_error(32) / _biharmonic_error(64)
    assert 3.5 <= ratio <= 4.5


def test_first_derivatives_of_sinsin(grid64):
    f = sinsin(grid64)
    x1, x2 = grid64.mesh()
    h = grid64.dx
    inner = (slice(1, -1), slice(1, -1))
    err1 = dx1(f).array - math.pi * np.cos(math.pi * x1) * np.sin(math.pi * x2)
    err2 = dx2(f).array - math.pi * np.sin(math.pi * x1) * np.cos(math.pi * x2)
    err12 = dx1x2(f).array - math.pi ** 2 * np.cos(math.pi * x1) * np.cos(math.pi * x2)
    assert np.max(np.abs(err1[inner])) <= math.pi ** 3 * h ** 2 / 6.0
    assert np.max(np.abs(err2[inner])) <= math.pi ** 3 * h ** 2 / 6.0
    assert np.max(np.abs(err12[inner])) <= math.pi ** 4 * h ** 2 / 3.0


def test_l2_sq_of_sinsin(grid64):
    assert l2_sq(sinsin(grid64)) == pytest.approx(0.25, abs=1e-3)
    assert l2_sq(sinsin(grid64, 0.236)) == pytest.approx(0.236 ** 2 * 0.25, abs=1e-3)


def test_laplacian_sq_converges_under_refinement():
    # ||Laplacian (a sin sin)||^2 = pi^4 a^2; the discrete eigenvalue is low by O(dx^2)
    exact = math.pi ** 4 * 0.236 ** 2
    errors = [abs(laplacian_sq(sinsin(Grid2D(m=m), 0.236)) - exact) for m in (32, 64, 128)]
    assert errors[0] <= 3e-3 * exact
    assert errors[1] < errors[0] / 3.5
    assert errors[2] < errors[1] / 3.5


def test_laplacian_sq_ignores_boundary_ghost_term(grid64):
    f = sinsin(grid64)
    assert np.abs(laplacian(f).array[0, 1:-1]).max() > 1.0
    interior = grid64.dx ** 2 * float(np.sum(laplacian(f).array[1:-1, 1:-1] ** 2))
    assert laplacian_sq(f) == pytest.approx(interior, rel=1e-12)


def test_l2_sq_equals_interior_sum_for_clamped(grid64):
    f = random_clamped_field(grid64, np.random.default_rng(3))
    interior = grid64.dx ** 2 * float(np.sum(f.array[1:-1, 1:-1] ** 2))
    assert l2_sq(f) == pytest.approx(interior, rel=1e-12)


def test_c0_norm(grid64):
    assert c0_norm(Field.zeros(grid64)) == 0.0
    assert c0_norm(sinsin(grid64)) == pytest.approx(1.0, abs=1e-15)
    assert c0_norm(sinsin(grid64, 0.236)) == pytest.approx(0.236, abs=1e-15)


def test_measurements_of_constant_field(grid64, partition):
    f = constant(grid64, 2.5)
    for s in partition.subdomains:
        assert subdomain_mean(f, s, partition) == pytest.approx(2.5, abs=1e-12)
        assert point_value(f, s, partition) == 2.5


def test_corner_subdomain_measurements(grid64, partition):
    f = sinsin(grid64)
    corner = partition.subdomains[0]
    expected_mean = 16.0 * ((1.0 - math.cos(math.pi / 4)) / math.pi) ** 2
    assert subdomain_mean(f, corner, partition) == pytest.approx(expected_mean, abs=1e-3)
    assert point_value(f, corner, partition) == pytest.approx(math.sin(math.pi / 8) ** 2, abs=1e-12)


def test_misaligned_grid_rejected(partition):
    f = Field.zeros(Grid2D(m=10))
    with pytest.raises(PreconditionError):
        subdomain_mean(f, partition.subdomains[0], partition)


def test_off_grid_center_rejected(partition):
    f = Field.zeros(Grid2D(m=12))
    with pytest.raises(PreconditionError):
        point_value(f, partition.subdomains[0], partition)


def test_partition_requires_integer_side():
    with pytest.raises(ConfigurationError):
        Partition.build(0.3)


@pytest.mark.parametrize("mode", ["averaged", "point"])
def test_residual_of_constant_field_vanishes(mode, grid64, partition):
    f = constant(grid64, -1.25)
    for s in partition.subdomains:
        assert np.max(np.abs(residual_f_j(f, s, partition, mode).values)) == pytest.approx(0.0, abs=1e-12)


def test_averaged_residual_has_zero_mean(grid64, partition):
    f = random_clamped_field(grid64, np.random.default_rng(11))
    for s in partition.subdomains:
        r = residual_f_j(f, s, partition, "averaged")
        assert subdomain_mean(r, s, partition) == pytest.approx(0.0, abs=1e-12)


def test_point_residual_vanishes_at_center(grid64, partition):
    f = sinsin(grid64)
    for s in partition.subdomains:
        r = residual_f_j(f, s, partition, "point")
        assert point_value(r, s, partition) == 0.0


def test_owner_map_tiles_every_node_once(grid64, partition):
    owner = partition.owner_map(grid64)
    assert owner.shape == grid64.shape
    assert set(np.unique(owner)) == set(range(partition.N))
    cells = grid64.m // partition.n_side
    # the shared line x1 = 1/4 belongs to the second block row
    assert owner[cells, 0] == partition.n_side
    assert owner[cells - 1, 0] == 0
    assert owner[-1, -1] == partition.N - 1


def _integration_by_parts_residual(m: int) -> float:
    grid = Grid2D(m=m)
    f = Field.from_function(
        grid, lambda x1, x2: (np.sin(np.pi * x1) + 0.5 * np.sin(2 * np.pi * x1)) * np.sin(np.pi * x2)
    )
    return abs(block_quadrature(f.array ** 2 * dx1(f).array, grid.dx))


def test_discrete_integration_by_parts_is_second_order():
    r32, r64 = _integration_by_parts_residual(32), _integration_by_parts_residual(64)
    assert r64 <= 2.0 * (1.0 / 64) ** 2
    assert 3.5 <= r32 / r64 <= 4.5


def _mixed_derivative_residual(m: int) -> float:
    grid = Grid2D(m=m)
    f = quartic(grid)
    mixed = l2_sq(dx1x2(f))
    product = block_quadrature(dx1x1(f).array * dx2x2(f).array, grid.dx)
    return abs(mixed - product)


def test_mixed_derivative_identity_is_second_order():
    ratio = _mixed_derivative_residual(32) / _mixed_derivative_residual(64)
    assert 3.5 <= ratio <= 4.5


@hsettings(max_examples=25, deadline=None)
@given(
    seed_f=st.integers(0, 2 ** 32 - 1),
    seed_g=st.integers(0, 2 ** 32 - 1),
    a=st.floats(-10, 10),
    b=st.floats(-10, 10),
)
def test_operators_are_linear(seed_f, seed_g, a, b):
    grid = Grid2D(m=16)
    f = random_clamped_field(grid, np.random.default_rng(seed_f))
    g = random_clamped_field(grid, np.random.default_rng(seed_g))
    combo = f.scaled(a) + g.scaled(b)
    for op in OPERATORS:
        expected = a * op(f).values + b * op(g).values
        scale = max(1.0, float(np.max(np.abs(expected))))
        np.testing.assert_allclose(op(combo).values, expected, rtol=0, atol=1e-10 * scale)


@hsettings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), c=st.floats(0.01, 100))
def test_l2_sq_is_nonnegative_and_quadratic(seed, c):
    grid = Grid2D(m=16)
    f = random_clamped_field(grid, np.random.default_rng(seed))
    assert l2_sq(f) > 0.0
    assert l2_sq(f.scaled(c)) == pytest.approx(c * c * l2_sq(f), rel=1e-12)


def test_field_csv_dump(tmp_path):
    grid = Grid2D(m=8)
    f = sinsin(grid, 0.236)
    path = dump_field_csv(f, tmp_path / "f.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,x2,value"
    assert len(lines) == 1 + grid.n ** 2
    assert lines[2].startswith("0,0.125,")
    assert np.array_equal(load_field_csv(path).values, f.values)
