import os
import subprocess
import sys

import numpy as np
import pytest

from pesplit import kernels
from pesplit.grid import make_grid
from pesplit.noise import default_sigma, make_noise

from conftest import random_field

BACKENDS = kernels.available_backends()
needs_compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def _setup(kind="diagonal-multiplicative", seed=3):
    g = make_grid(1.0, 1.0, 10, 7)
    rng = np.random.default_rng(seed)
    model = make_noise(kind, 5, default_sigma(5, 0.3), g)
    c0 = random_field(rng, g, decay=2.0, scale=0.3).coeffs
    dw = rng.standard_normal((6, 5)) * 0.1
    return g, model, c0, dw


def _advance(backend, g, model, c0, dw, nonlinear=True, lin=None, impl=1.0, delta=0.01, **kw):
    lin = np.exp(-delta * g.eigenvalues) if lin is None else lin
    out = np.empty((dw.shape[0] + 1,) + g.shape)
    status = backend.advance(c0, delta, lin, impl, nonlinear, g.transforms, model.shapes, model.add_amp,
                             model.mult_amp, g.weights, dw, out, **kw)
    return status, out


@needs_compiled
def test_backends_agree_on_nonlinear(rng):
    g = make_grid(2.0, 1.0, 12, 9)
    u, v = random_field(rng, g), random_field(rng, g)
    py = kernels.get_backend("python").nonlinear(u.coeffs, v.coeffs, g.transforms)
    cy = kernels.get_backend("cython").nonlinear(u.coeffs, v.coeffs, g.transforms)
    np.testing.assert_allclose(cy, py, rtol=0, atol=1e-13 * np.abs(py).max())


@needs_compiled
@pytest.mark.parametrize("kind", ["additive", "low-mode-multiplicative"])
def test_backends_agree_on_advance(kind):
    g, model, c0, dw = _setup(kind)
    s_py, out_py = _advance(kernels.get_backend("python"), g, model, c0, dw)
    s_cy, out_cy = _advance(kernels.get_backend("cython"), g, model, c0, dw)
    assert tuple(s_py) == tuple(s_cy) == (kernels.OK, 6)
    np.testing.assert_allclose(out_cy, out_py, rtol=0, atol=1e-13 * np.abs(out_py).max())


@pytest.mark.parametrize("name", BACKENDS)
def test_linear_only_step_is_exact(name):
    g, model, c0, dw = _setup()
    lin = np.exp(-0.01 * g.eigenvalues)
    status, out = _advance(kernels.get_backend(name), g, model, c0, np.zeros_like(dw), nonlinear=False)
    assert status[0] == kernels.OK
    np.testing.assert_allclose(out[-1], c0 * lin ** 6, rtol=1e-13)
    assert np.array_equal(out[0], c0)


@pytest.mark.parametrize("name", BACKENDS)
def test_blowup_and_nan_reported(name):
    g, model, c0, dw = _setup()
    status, _ = _advance(kernels.get_backend(name), g, model, c0, dw, nonlinear=False,
                         lin=np.full(g.shape, 10.0), blowup_limit=1e3)
    assert status[0] == kernels.BLOWUP and status[1] < 6
    bad = c0.copy()
    bad[0, 1] = np.nan
    status, _ = _advance(kernels.get_backend(name), g, model, bad, dw, nonlinear=False)
    assert status[0] == kernels.BLOWUP and status[1] == 0


@pytest.mark.parametrize("name", BACKENDS)
def test_no_convergence_reported(name):
    g, model, c0, dw = _setup()
    status, _ = _advance(kernels.get_backend(name), g, model, 50 * c0, dw, lin=np.ones(g.shape), delta=1.0,
                         maxiter=3)
    assert status[0] == kernels.NO_CONVERGENCE


def _backend_in_subprocess(value):
    env = dict(os.environ, PESPLIT_BACKEND=value)
    return subprocess.run([sys.executable, "-c", "from pesplit import kernels; print(kernels.BACKEND)"],
                          env=env, capture_output=True, text=True)


def test_backend_selection_by_environment():
    res = _backend_in_subprocess("python")
    assert res.returncode == 0 and res.stdout.strip() == "python"
    res = _backend_in_subprocess("nonsense")
    assert res.returncode != 0 and "PESPLIT_BACKEND" in res.stderr
    res = _backend_in_subprocess("cython")
    if "cython" in BACKENDS:
        assert res.stdout.strip() == "cython"
    else:
        assert res.returncode != 0
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
