import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pesplit.errors import ConfigurationError, DomainError, ShapeError
from pesplit.grid import (DzField, Field, ThetaField, dz_field, eval_field, l2_inner, make_grid,
                          min_quadrature_nodes, norms)

from conftest import random_field


def dense_nodes(grid, q=400):
    x = (np.arange(q) + 0.5) * grid.L / q
    z = -grid.h + (np.arange(q) + 0.5) * grid.h / q
    X, Z = np.meshgrid(x, z, indexing="ij")
    return X, Z, (grid.L / q) * (grid.h / q)


def test_min_quadrature_nodes():
    assert min_quadrature_nodes(8) == 13
    assert min_quadrature_nodes(1) == 2
    g = make_grid(1.0, 1.0, 8, 5)
    assert (g.Qx, g.Qz) == (13, 8)


@pytest.mark.parametrize("args", [(0.0, 1.0, 4, 4), (1.0, -1.0, 4, 4), (1.0, 1.0, 0, 4), (1.0, 1.0, 4, 4, 3, 9)])
def test_make_grid_rejects_bad_input(args):
    with pytest.raises(ConfigurationError):
        make_grid(*args)


def test_eigenvalues_and_weights(small_grid):
    g = small_grid
    assert g.eigenvalues[2, 3] == pytest.approx((3 * math.pi / g.L) ** 2 + (3 * math.pi / g.h) ** 2, rel=1e-15)
    assert g.weights[0, 0] == pytest.approx(g.L * g.h / 2)
    assert g.weights[4, 2] == pytest.approx(g.L * g.h / 4)
    assert not g.admissible_mask[:, 0].any() and g.admissible_mask[:, 1:].all()


def test_basis_orthogonality_by_dense_quadrature(small_grid):
    g = small_grid
    X, Z, dA = dense_nodes(g)
    modes = [(1, 0), (1, 1), (2, 3), (5, 6), (8, 2)]
    for a in modes:
        fa = eval_field(Field.mode(g, *a), X, Z)
        for b in modes:
            fb = eval_field(Field.mode(g, *b), X, Z)
            expect = g.weights[a[0] - 1, a[1]] if a == b else 0.0
            assert (fa * fb).sum() * dA == pytest.approx(expect, abs=1e-12)


def test_eval_field_matches_explicit_sum(small_grid, rng):
    g = small_grid
    f = random_field(rng, g)
    x, z = 0.7, -1.3
    direct = sum(f.coeffs[k - 1, m] * math.sin(k * math.pi * x / g.L) * math.cos(m * math.pi * z / g.h)
                 for k in range(1, g.Nx + 1) for m in range(g.Nz + 1))
    assert eval_field(f, x, z) == pytest.approx(direct, rel=1e-13)
    # lateral walls
    assert eval_field(f, 0.0, -0.5) == pytest.approx(0.0, abs=1e-14)
    assert eval_field(f, g.L, -0.5) == pytest.approx(0.0, abs=1e-12)


def test_eval_field_outside_domain(small_grid):
    f = Field.mode(small_grid, 1, 1)
    with pytest.raises(DomainError):
        eval_field(f, -0.1, -0.5)
    with pytest.raises(DomainError):
        eval_field(f, 0.5, 0.2)


def test_norms_against_dense_quadrature(small_grid, rng):
    g = small_grid
    f = random_field(rng, g)
    X, Z, dA = dense_nodes(g, 600)
    k = np.arange(1, g.Nx + 1) * math.pi / g.L
    m = np.arange(g.Nz + 1) * math.pi / g.h
    sx, cx = np.sin(X[..., None] * k), np.cos(X[..., None] * k)
    cz, sz = np.cos(Z[..., None] * m), np.sin(Z[..., None] * m)
    v = np.einsum("ijk,km,ijm->ij", sx, f.coeffs, cz)
    vx = np.einsum("ijk,km,ijm->ij", cx, f.coeffs * k[:, None], cz)
    vz = np.einsum("ijk,km,ijm->ij", sx, -f.coeffs * m[None, :], sz)
    h_norm, v_norm, _ = norms(f)
    assert h_norm == pytest.approx(math.sqrt((v ** 2).sum() * dA), rel=1e-10)
    assert v_norm == pytest.approx(math.sqrt(((vx ** 2 + vz ** 2).sum()) * dA), rel=1e-10)


def test_dz_field_matches_finite_difference(small_grid, rng):
    g = small_grid
    f = random_field(rng, g, decay=2.0)
    d = dz_field(f)
    x, z, eps = 1.1, -0.8, 1e-6
    fd = (eval_field(f, x, z + eps) - eval_field(f, x, z - eps)) / (2 * eps)
    assert eval_field(d, x, z) == pytest.approx(fd, rel=1e-7)
    assert isinstance(d, DzField)
    assert norms(d)[0] == pytest.approx(math.sqrt(((f.coeffs * g.mz) ** 2 * g.weights).sum()), rel=1e-14)


def test_field_shapes_and_arithmetic(small_grid, rng):
    g = small_grid
    with pytest.raises(ShapeError):
        Field(g, np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        Field.mode(g, 0, 1)
    a, b = random_field(rng, g), random_field(rng, g)
    np.testing.assert_array_equal((a + b).coeffs, a.coeffs + b.coeffs)
    np.testing.assert_array_equal((2 * a - b).coeffs, 2 * a.coeffs - b.coeffs)
    with pytest.raises(ShapeError):
        a + ThetaField(g)
    with pytest.raises(ShapeError):
        a + random_field(rng, make_grid(1.0, 1.0, 8, 6))
    with pytest.raises(ValueError):
        a.coeffs[0, 0] = 1.0


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31 - 1))
def test_l2_inner_bilinear_symmetric(alpha, beta, seed):
    g = make_grid(1.0, 0.5, 5, 4)
    r = np.random.default_rng(seed)
    u, v, w = (random_field(r, g) for _ in range(3))
    assert l2_inner(u, v) == pytest.approx(l2_inner(v, u), rel=1e-14, abs=1e-300)
    lhs = l2_inner(alpha * u + beta * v, w)
    rhs = alpha * l2_inner(u, w) + beta * l2_inner(v, w)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)
    assert l2_inner(u, u) == pytest.approx(norms(u)[0] ** 2, rel=1e-14)
