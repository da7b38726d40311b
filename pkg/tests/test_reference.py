import math

import numpy as np
import pytest

from pesplit.errors import BlowUpError, ConfigurationError, ShapeError
from pesplit.grid import Field, make_grid
from pesplit.noise import coarsen, default_sigma, make_noise, sample_path
from pesplit.reference import ReferenceConfig, run_reference
from pesplit.splitting import SplitConfig, run_splitting

from conftest import random_field


@pytest.fixture
def grid():
    return make_grid(1.0, 0.5, 8, 5)


def test_heat_oracle(grid, rng):
    v0 = random_field(rng, grid)
    noise = make_noise("additive", 2, [0.0, 0.0], grid)
    cfg = ReferenceConfig(0.7, 14, grid, noise, v0, micro_steps=3, nonlinear=False)
    ref = run_reference(cfg, sample_path(noise, 0, 42, 0.7))
    expect = v0.coeffs * np.exp(-0.7 * grid.eigenvalues)
    np.testing.assert_allclose(ref.states[-1], expect, rtol=1e-10, atol=1e-300)
    np.testing.assert_allclose(ref.at_nodes(7)[1], v0.coeffs * np.exp(-0.1 * grid.eigenvalues), rtol=1e-10)


@pytest.mark.parametrize("kind", ["additive", "diagonal-multiplicative"])
def test_per_mode_recursion_oracle(grid, rng, kind):
    """Without B each noise channel is a scalar recursion, written out by hand."""
    sigma = [0.4, 0.3, 0.2]
    noise = make_noise(kind, 3, sigma, grid)
    v0 = random_field(rng, grid)
    T, n_ref, J = 0.5, 10, 4
    cfg = ReferenceConfig(T, n_ref, grid, noise, v0, micro_steps=J, nonlinear=False)
    path = sample_path(noise, 9, 80, T)
    ref = run_reference(cfg, path)
    dw = coarsen(path, 2).increments
    delta = T / (n_ref * J)
    for i, ((k, m),) in enumerate(noise.modes):
        e = 1.0 / math.sqrt(grid.weights[k - 1, m])       # basis coefficient of the unit shape
        decay = math.exp(-delta * grid.eigenvalues[k - 1, m])
        x = v0.coeffs[k - 1, m]
        traj = [x]
        for j in range(n_ref * J):
            kick = sigma[i] * e if kind == "additive" else sigma[i] * x
            x = decay * x + kick * dw[i, j]
            traj.append(x)
        np.testing.assert_allclose(ref.states[:, k - 1, m], traj[::J], rtol=1e-12, atol=1e-15)
    # a mode outside every channel only feels the heat flow
    assert ref.states[-1, 7, 5] == pytest.approx(v0.coeffs[7, 5] * math.exp(-T * grid.eigenvalues[7, 5]),
                                                rel=1e-10)


def test_noise_free_reference_matches_noise_free_scheme(grid, rng):
    # with psi = 0 and eps = 0 the scheme and the reference integrate the same flow
    v0 = random_field(rng, grid, decay=1.0, scale=2.0)
    noise = make_noise("additive", 1, [0.0], grid)
    path = sample_path(noise, 0, 64, 1.0)
    ref = run_reference(ReferenceConfig(1.0, 16, grid, noise, v0, micro_steps=4), path)
    hist = run_splitting(SplitConfig(1.0, 4, grid, noise, v0, det_steps=16, stoch_steps=16), path)
    np.testing.assert_allclose(hist.eta_minus, ref.at_nodes(4), rtol=0, atol=1e-12 * np.abs(v0.coeffs).max())


def test_energy_decreases_without_noise(grid, rng):
    v0 = random_field(rng, grid, decay=0.5, scale=3.0)
    noise = make_noise("additive", 1, [0.0], grid)
    ref = run_reference(ReferenceConfig(0.5, 50, grid, noise, v0, micro_steps=2), sample_path(noise, 0, 100, 0.5))
    h = ref.norms["h"]
    assert np.all(np.diff(h) <= 1e-14 * h[0])


def test_sampling_and_provenance(grid, rng):
    noise = make_noise("additive", 2, default_sigma(2), grid)
    v0 = random_field(rng, grid)
    cfg = ReferenceConfig(1.0, 12, grid, noise, v0, micro_steps=2)
    path = sample_path(noise, 5, 48, 1.0)
    ref = run_reference(cfg, path)
    assert ref.provenance == path.provenance
    assert ref.at_nodes(4).shape == (5,) + grid.shape
    np.testing.assert_array_equal(ref.norms_at(3)["h"], ref.norms["h"][::4])
    np.testing.assert_array_equal(ref.field(0).coeffs, v0.coeffs)
    assert ref.times[-1] == 1.0
    with pytest.raises(ConfigurationError):
        ref.at_nodes(5)
    cfg.check_divides([1, 2, 3, 4, 6, 12])
    with pytest.raises(ConfigurationError):
        cfg.check_divides([4, 8])


def test_reference_errors(grid, rng):
    noise = make_noise("additive", 2, default_sigma(2), grid)
    v0 = random_field(rng, grid)
    cfg = ReferenceConfig(1.0, 12, grid, noise, v0)
    with pytest.raises(ConfigurationError):
        run_reference(cfg, sample_path(noise, 0, 18, 1.0))
    with pytest.raises(ConfigurationError):
        run_reference(cfg, sample_path(noise, 0, 12, 2.0))
    with pytest.raises(ShapeError):
        run_reference(cfg, sample_path(3, 0, 12, 1.0))
    with pytest.raises(ConfigurationError):
        ReferenceConfig(1.0, 0, grid, noise, v0)
    g = make_grid(math.pi, math.pi, 4, 3)
    loud = make_noise("diagonal-multiplicative", 1, [1e4], g)
    with pytest.raises(BlowUpError):
        run_reference(ReferenceConfig(1.0, 4, g, loud, Field.mode(g, 1, 1), nonlinear=False),
                      sample_path(loud, 0, 4, 1.0))
