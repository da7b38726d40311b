# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (same API as ``_kernels_py``).

Matrix products go through the BLAS bundled with SciPy; the micro-step loop,
the implicit-midpoint iteration and the noise update run without touching
the interpreter.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

cdef enum:
    OK_ = 0
    BLOWUP_ = 1
    NO_CONVERGENCE_ = 2

OK = OK_
BLOWUP = BLOWUP_
NO_CONVERGENCE = NO_CONVERGENCE_


cdef inline void _mm(const double* A, int lda, const double* B, int ldb, double* C, int ldc,
                     int m, int k, int n) noexcept nogil:
    # row-major C (m x n) = A (m x k) @ B (k x n), computed as column-major C^T = B^T A^T
    cdef char tr = b'N'
    cdef double one = 1.0, zero = 0.0
    dgemm(&tr, &tr, &n, &m, &k, &one, <double*>B, &ldb, <double*>A, &lda, &zero, C, &ldc)


cdef class _Work:
    cdef int Nx, Nz, Nz1, Qx, Qz
    cdef const double[:, ::1] sx, cx, czt, szt, ax, az, phi_fac
    cdef const double[::1] kx, mz
    cdef double[:, ::1] a1, a2, t1, t2, U, Vx, Th, Vz, P, t5

    def __init__(self, tr):
        self.sx = tr.sx
        self.cx = tr.cx
        self.czt = tr.czt
        self.szt = tr.szt
        self.ax = tr.ax
        self.az = tr.az
        self.phi_fac = tr.phi_fac
        self.kx = tr.kx
        self.mz = tr.mz
        self.Qx = tr.sx.shape[0]
        self.Nx = tr.sx.shape[1]
        self.Nz1 = tr.czt.shape[0]
        self.Nz = tr.szt.shape[0]
        self.Qz = tr.czt.shape[1]
        Nx, Nz1, Qx, Qz = self.Nx, self.Nz1, self.Qx, self.Qz
        self.a1 = np.empty((Nx, Nz1))
        self.a2 = np.empty((Nx, Nz1))
        self.t1 = np.empty((Nx, Qz))
        self.t2 = np.empty((Nx, Qz))
        self.U = np.empty((Qx, Qz))
        self.Vx = np.empty((Qx, Qz))
        self.Th = np.empty((Qx, Qz))
        self.Vz = np.empty((Qx, Qz))
        self.P = np.empty((Qx, Qz))
        self.t5 = np.empty((Nx, Qz))

    cdef void nonlinear(self, const double[:, ::1] cu, const double[:, ::1] cv, double[:, ::1] g) noexcept nogil:
        cdef int i, j
        cdef int Nx = self.Nx, Nz = self.Nz, Nz1 = self.Nz1, Qx = self.Qx, Qz = self.Qz
        # u and dx v on the cos(z) grid
        _mm(&cu[0, 0], Nz1, &self.czt[0, 0], Qz, &self.t1[0, 0], Qz, Nx, Nz1, Qz)
        _mm(&self.sx[0, 0], Nx, &self.t1[0, 0], Qz, &self.U[0, 0], Qz, Qx, Nx, Qz)
        for i in range(Nx):
            for j in range(Nz1):
                self.a1[i, j] = self.kx[i] * cv[i, j]
        _mm(&self.a1[0, 0], Nz1, &self.czt[0, 0], Qz, &self.t2[0, 0], Qz, Nx, Nz1, Qz)
        _mm(&self.cx[0, 0], Nx, &self.t2[0, 0], Qz, &self.Vx[0, 0], Qz, Qx, Nx, Qz)
        # Phi(u) and dz v on the sin(z) grid; the (Nx, Nz) blocks keep row stride Nz+1
        for i in range(Nx):
            for j in range(Nz):
                self.a1[i, j] = self.phi_fac[i, j] * cu[i, j + 1]
                self.a2[i, j] = -self.mz[j] * cv[i, j + 1]
        _mm(&self.a1[0, 0], Nz1, &self.szt[0, 0], Qz, &self.t1[0, 0], Qz, Nx, Nz, Qz)
        _mm(&self.cx[0, 0], Nx, &self.t1[0, 0], Qz, &self.Th[0, 0], Qz, Qx, Nx, Qz)
        _mm(&self.a2[0, 0], Nz1, &self.szt[0, 0], Qz, &self.t2[0, 0], Qz, Nx, Nz, Qz)
        _mm(&self.sx[0, 0], Nx, &self.t2[0, 0], Qz, &self.Vz[0, 0], Qz, Qx, Nx, Qz)
        for i in range(Qx):
            for j in range(Qz):
                self.P[i, j] = self.U[i, j] * self.Vx[i, j] + self.Th[i, j] * self.Vz[i, j]
        _mm(&self.ax[0, 0], Qx, &self.P[0, 0], Qz, &self.t5[0, 0], Qz, Nx, Qx, Qz)
        _mm(&self.t5[0, 0], Qz, &self.az[0, 0], Nz1, &g[0, 0], Nz1, Nx, Qz, Nz1)
        for i in range(Nx):
            g[i, 0] = 0.0


def nonlinear(cu, cv, tr):
    """Coefficients of P_H(u dx v + Phi(u) dz v); see ``_kernels_py.nonlinear``."""
    cdef _Work w = _Work(tr)
    cdef const double[:, ::1] a = np.ascontiguousarray(cu, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(cv, dtype=np.float64)
    g = np.empty((w.Nx, w.Nz1))
    cdef double[:, ::1] gv = g
    with nogil:
        w.nonlinear(a, b, gv)
    return g


cdef double _amax(double[:, ::1] a) noexcept nogil:
    cdef double m = 0.0, x
    cdef Py_ssize_t i, j
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            x = fabs(a[i, j])
            if not x <= m:      # also propagates NaN
                m = x
    return m


cdef int _advance(_Work wk, double delta, const double[:, ::1] L, const double[:, ::1] I, bint use_nonlinear,
                  const double[:, :, ::1] E, const double[::1] aa, const double[::1] ma,
                  const double[:, ::1] W, const double[:, ::1] DW,
                  double[:, :, ::1] O, double[:, ::1] s, double[:, ::1] w, double[:, ::1] vnew,
                  double[:, ::1] bar, double[:, ::1] g, double tol, int maxiter, double limit,
                  int* failed_step) noexcept nogil:
    cdef int Nx = wk.Nx, Nz1 = wk.Nz1, n_noise = E.shape[0]
    cdef int nsteps = O.shape[0] - 1
    cdef int j, it, i, k, m
    cdef double scale, diff, x, proj, coef
    cdef bint converged
    for j in range(nsteps):
        failed_step[0] = j
        for k in range(Nx):
            for m in range(Nz1):
                w[k, m] = L[k, m] * s[k, m]
        if use_nonlinear:
            # fixed point v = w - delta B(bar, bar), bar = (w + v) / 2
            scale = _amax(w) + 1e-300
            bar[:, :] = w
            vnew[:, :] = w
            converged = False
            for it in range(maxiter):
                wk.nonlinear(bar, bar, g)
                diff = 0.0
                for k in range(Nx):
                    for m in range(Nz1):
                        x = w[k, m] - delta * g[k, m]
                        if not fabs(x - vnew[k, m]) <= diff:
                            diff = fabs(x - vnew[k, m])
                        vnew[k, m] = x
                        bar[k, m] = 0.5 * (w[k, m] + x)
                if diff <= tol * scale:
                    converged = True
                    break
            if not converged:
                return NO_CONVERGENCE_
            w[:, :] = vnew
        for i in range(n_noise):
            proj = 0.0
            for k in range(Nx):
                for m in range(Nz1):
                    proj = proj + E[i, k, m] * s[k, m] * W[k, m]
            coef = DW[j, i] * (aa[i] + ma[i] * proj)
            for k in range(Nx):
                for m in range(Nz1):
                    w[k, m] = w[k, m] + coef * E[i, k, m]
        for k in range(Nx):
            for m in range(Nz1):
                s[k, m] = I[k, m] * w[k, m]
        O[j + 1, :, :] = s
        if not _amax(s) <= limit:
            return BLOWUP_
    failed_step[0] = nsteps
    return OK_


def advance(c0, double delta, lin, impl, bint use_nonlinear, tr, noise_e, add_amp, mult_amp,
            wts, dw, out, double tol=1e-14, int maxiter=60, double blowup_limit=np.inf):
    """Run ``out.shape[0] - 1`` micro-steps from ``c0``; see ``_kernels_py.advance``."""
    cdef _Work wk = _Work(tr)
    cdef int Nx = wk.Nx, Nz1 = wk.Nz1
    E_arr = np.ascontiguousarray(noise_e, dtype=np.float64)
    n_noise = E_arr.shape[0]
    nsteps = out.shape[0] - 1
    if n_noise:
        DW_arr = np.ascontiguousarray(dw, dtype=np.float64).reshape(nsteps, n_noise)
    else:
        DW_arr = np.zeros((max(nsteps, 1), 1))
        E_arr = np.zeros((0, Nx, Nz1))
    # scalar propagators broadcast over the coefficient array
    cdef const double[:, ::1] L = np.ascontiguousarray(np.broadcast_to(lin, (Nx, Nz1)), dtype=np.float64)
    cdef const double[:, ::1] I = np.ascontiguousarray(np.broadcast_to(impl, (Nx, Nz1)), dtype=np.float64)
    cdef const double[:, ::1] W = np.ascontiguousarray(wts, dtype=np.float64)
    cdef const double[:, :, ::1] E = E_arr
    cdef const double[::1] aa = np.ascontiguousarray(add_amp, dtype=np.float64).reshape(-1)
    cdef const double[::1] ma = np.ascontiguousarray(mult_amp, dtype=np.float64).reshape(-1)
    cdef const double[:, ::1] DW = DW_arr
    cdef double[:, :, ::1] O = out
    cdef double[:, ::1] s = np.array(c0, dtype=np.float64, order="C")
    cdef double[:, ::1] w = np.empty((Nx, Nz1))
    cdef double[:, ::1] vnew = np.empty((Nx, Nz1))
    cdef double[:, ::1] bar = np.empty((Nx, Nz1))
    cdef double[:, ::1] g = np.empty((Nx, Nz1))
    cdef int step = 0, status
    O[0, :, :] = s
    with nogil:
        status = _advance(wk, delta, L, I, use_nonlinear, E, aa, ma, W, DW, O, s, w, vnew, bar, g,
                          tol, maxiter, blowup_limit, &step)
    return status, step
