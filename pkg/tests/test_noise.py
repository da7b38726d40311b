import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pesplit.errors import ConfigurationError, ShapeError
from pesplit.grid import Field, l2_inner, make_grid
from pesplit.noise import (KINDS, apply_psi_increment, coarsen, default_sigma, estimate_constants, hs_norms,
                           make_noise, psi_columns, sample_path)

from conftest import random_field


def test_additive_declared_constants_single_channel(pi_grid):
    model = make_noise("additive", 1, [0.1], pi_grid)
    assert model.modes == (((1, 1),),)
    assert model.declared["K0"] == pytest.approx(0.01, rel=1e-15)
    # e_11 = sin x cos z / sqrt(pi^2/4): |dz e|^2 = 1, |grad e|^2 = 2
    assert model.declared["L0"] == pytest.approx(0.01, rel=1e-14)
    assert model.declared["R0"] == pytest.approx(0.02, rel=1e-14)
    assert model.declared["K1"] == 0.0


def test_diagonal_declared_constants(small_grid):
    sigma = [0.3, 0.1, 0.2]
    model = make_noise("diagonal-multiplicative", 3, sigma, small_grid)
    assert model.declared["K1"] == model.declared["K3"] == pytest.approx(0.09)
    assert model.declared["K0"] == 0.0


def test_shapes_orthonormal(small_grid):
    for kind in KINDS:
        model = make_noise(kind, 5, default_sigma(5), small_grid)
        gram = np.einsum("iab,jab->ij", model.shapes * small_grid.weights, model.shapes)
        np.testing.assert_allclose(gram, np.eye(5), atol=1e-14)
        assert not model.shapes[:, :, 0].any()


def test_channels_ordered_by_eigenvalue(small_grid):
    model = make_noise("additive", 6, default_sigma(6), small_grid)
    lam = [small_grid.eigenvalues[k - 1, m] for ((k, m),) in model.modes]
    assert lam == sorted(lam)


@pytest.mark.parametrize("kind,m_W,sigma", [
    ("bogus", 1, [0.1]), ("additive", 2, [0.1]), ("additive", 1, [-0.1]),
    ("additive", 1, [float("nan")]), ("additive", 500, default_sigma(500)),
])
def test_make_noise_errors(small_grid, kind, m_W, sigma):
    with pytest.raises(ConfigurationError):
        make_noise(kind, m_W, sigma, small_grid)


def test_explicit_modes_validation(small_grid):
    with pytest.raises(ConfigurationError):
        make_noise("additive", 2, [0.1, 0.1], small_grid, {"modes": [(1, 1), (1, 1)]})
    with pytest.raises(ConfigurationError):
        make_noise("additive", 1, [0.1], small_grid, {"modes": [(1, 0)]})
    with pytest.raises(ConfigurationError):
        make_noise("low-mode-multiplicative", 1, [0.1], small_grid, {"modes": [((1, 1), (2, 2))]})


def test_psi_increment_forms(small_grid, rng):
    g = small_grid
    v = random_field(rng, g)
    dw = rng.standard_normal(4)
    add = make_noise("additive", 4, [0.1, 0.2, 0.3, 0.4], g)
    out = apply_psi_increment(add, 0.0, v, dw)
    expect = sum(s * d * e for s, d, e in zip(add.sigma, dw, add.shapes))
    np.testing.assert_allclose(out.coeffs, expect, rtol=1e-14)
    diag = make_noise("diagonal-multiplicative", 4, [0.1, 0.2, 0.3, 0.4], g)
    out = apply_psi_increment(diag, 0.0, v, dw)
    for i, ((k, m),) in enumerate(diag.modes):
        # <v, e_i> e_i is the projection onto mode (k, m)
        assert out.coeffs[k - 1, m] == pytest.approx(diag.sigma[i] * dw[i] * v.coeffs[k - 1, m], rel=1e-13)
    with pytest.raises(ShapeError):
        apply_psi_increment(diag, 0.0, v, dw[:3])


def test_hs_norm_additive(small_grid):
    model = make_noise("additive", 3, [0.1, 0.2, 0.3], small_grid)
    hs = hs_norms(model, np.zeros(small_grid.shape))
    assert hs["H"] == pytest.approx(0.14, rel=1e-14)


@given(st.integers(0, 2**31 - 1))
def test_psi_affine_in_v(seed):
    g = make_grid(1.0, 1.0, 5, 4)
    r = np.random.default_rng(seed)
    model = make_noise("low-mode-multiplicative", 3, [0.2, 0.1, 0.05], g)
    u, v = random_field(r, g), random_field(r, g)
    a = r.uniform(-2, 2)
    lhs = psi_columns(model, (u + a * v).coeffs)
    rhs = psi_columns(model, u.coeffs) + a * psi_columns(model, v.coeffs)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13 * (1 + np.abs(rhs).max()))
    # each channel is a multiple of its shape
    e0 = Field(g, model.shapes[0])
    assert np.allclose(lhs[0], l2_inner(Field(g, lhs[0]), e0) * model.shapes[0], atol=1e-14)


def test_sample_path_deterministic_and_scaled():
    p1 = sample_path(3, 42, 4096, 2.0)
    p2 = sample_path(3, 42, 4096, 2.0)
    np.testing.assert_array_equal(p1.increments, p2.increments)
    assert not np.array_equal(sample_path(3, 43, 4096, 2.0).increments, p1.increments)
    # a channel does not depend on how many channels were drawn
    np.testing.assert_array_equal(sample_path(1, 42, 4096, 2.0).increments[0], p1.increments[0])
    var = p1.increments.var(axis=1) / p1.dt
    # sample variance of 4096 normals is within ~5 standard errors of 1
    assert np.all(np.abs(var - 1.0) < 5 * math.sqrt(2 / 4096))
    assert abs(p1.increments.mean()) < 5 * math.sqrt(p1.dt / p1.increments.size)
    assert p1.provenance.seed == 42 and p1.provenance.n_fine_root == 4096
    with pytest.raises(ValueError):
        p1.increments[0, 0] = 1.0


@pytest.mark.parametrize("args", [(1, -1, 8, 1.0), (1, 0, 0, 1.0), (1, 0, 8, 0.0), (1, 1.5, 8, 1.0)])
def test_sample_path_errors(args):
    with pytest.raises(ConfigurationError):
        sample_path(*args)


def test_coarsen_sums_and_associative():
    p = sample_path(2, 5, 96, 1.0)
    c4 = coarsen(p, 4)
    np.testing.assert_allclose(c4.increments, p.increments.reshape(2, 24, 4).sum(axis=2), rtol=0, atol=0)
    two_step = coarsen(coarsen(p, 2), 6)
    direct = coarsen(p, 12)
    np.testing.assert_allclose(two_step.increments, direct.increments, rtol=0, atol=1e-14)
    assert direct.factor == 12 and direct.provenance == p.provenance
    # total Wiener increment is conserved
    np.testing.assert_allclose(direct.increments.sum(axis=1), p.increments.sum(axis=1), atol=1e-14)
    assert coarsen(p, 1) is p
    with pytest.raises(ConfigurationError):
        coarsen(p, 7)


@pytest.mark.parametrize("kind", KINDS)
def test_estimates_dominated_by_declared(small_grid, kind):
    model = make_noise(kind, 6, default_sigma(6), small_grid)
    rep = estimate_constants(model, samples=60, seed=1)
    for name, est in rep["estimated"].items():
        assert est <= rep["declared"][name] * (1 + 1e-10) + 1e-15, name
    with pytest.raises(ConfigurationError):
        estimate_constants(model, samples=5)
