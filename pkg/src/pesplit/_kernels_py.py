"""Pure NumPy implementation of the hot kernels.

This module is the reference backend; ``_kernels`` (Cython) must agree with
it to rounding error. Both expose the same two functions.
"""

import numpy as np

OK = 0
BLOWUP = 1
NO_CONVERGENCE = 2


def nonlinear(cu, cv, tr):
    """Coefficients of P_H(u dx v + Phi(u) dz v) for velocity coefficient arrays.

    ``tr`` is a :class:`pesplit.grid.Transforms`. The padded quadrature makes
    the Galerkin projection exact.
    """
    u = tr.sx @ cu @ tr.czt
    vx = tr.cx @ (tr.kx[:, None] * cv) @ tr.czt
    theta = tr.cx @ (tr.phi_fac * cu[:, 1:]) @ tr.szt
    vz = tr.sx @ (-tr.mz[None, :] * cv[:, 1:]) @ tr.szt
    g = tr.ax @ (u * vx + theta * vz) @ tr.az
    g[:, 0] = 0.0
    return g


def _midpoint(w, delta, tr, tol, maxiter):
    # implicit midpoint for dv/dt = -B(v, v) starting from w
    v_new = w
    bar = w
    scale = np.abs(w).max() + 1e-300
    for it in range(maxiter):
        v_old = v_new
        v_new = w - delta * nonlinear(bar, bar, tr)
        bar = 0.5 * (w + v_new)
        if np.abs(v_new - v_old).max() <= tol * scale:
            return v_new, True
    return v_new, False


def advance(*args, **kwargs):
    """Run ``out.shape[0] - 1`` micro-steps from ``c0``, storing every state in ``out``.

    One micro-step from s:
        w    = lin * s                          exact linear propagation
        w    = midpoint_B(w)                    if use_nonlinear
        w   += sum_i dW_i (add_i + mult_i <s, e_i>) e_i
        next = impl * w                         (I + c A)^{-1} when impl != 1

    Returns ``(status, step)``; ``status`` is OK, BLOWUP or NO_CONVERGENCE and
    ``step`` the failing micro-step.
    """
    # overflow is reported through the status code, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _advance(*args, **kwargs)


def _advance(c0, delta, lin, impl, use_nonlinear, tr, noise_e, add_amp, mult_amp, wts, dw,
            out, tol=1e-14, maxiter=60, blowup_limit=np.inf):
    nsteps = out.shape[0] - 1
    n_noise = noise_e.shape[0]
    s = np.array(c0, dtype=np.float64)
    out[0] = s
    for j in range(nsteps):
        w = lin * s
        if use_nonlinear:
            w, ok = _midpoint(w, delta, tr, tol, maxiter)
            if not ok:
                return NO_CONVERGENCE, j
        if n_noise:
            proj = np.tensordot(noise_e, s * wts, axes=([1, 2], [0, 1]))
            coef = dw[j] * (add_amp + mult_amp * proj)
            w = w + np.tensordot(coef, noise_e, axes=(0, 0))
        s = impl * w
        out[j + 1] = s
        amax = np.abs(s).max()
        if not amax <= blowup_limit:
            return BLOWUP, j
    return OK, nsteps
