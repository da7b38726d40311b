"""Invariant suite run by ``pesplit check``.

Every check returns a :class:`CheckResult`; the suite passes iff all do.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .config import StudyConfig
from .grid import Field, Grid, eval_field
from .noise import sample_path
from .operators import apply_A, nonlinear_B, phi, project_H, trilinear_b
from .splitting import SplitConfig, energy_defects, run_splitting

__all__ = ["CheckResult", "run_checks", "random_admissible", "trilinear_scale"]

TOL_CANCEL = 1e-10
TOL_DIVERGENCE = 1e-13
TOL_ENERGY = 1e-8


@dataclasses.dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<28} value={self.value:.3e}  tol={self.tolerance:.1e}  {self.detail}"


def random_admissible(rng, grid: Grid, decay: float = 1.0) -> Field:
    c = rng.standard_normal(grid.shape) / grid.eigenvalues ** (0.5 * decay)
    c[:, 0] = 0.0
    return Field(grid, c)


def trilinear_scale(u: Field, v: Field, w: Field) -> float:
    """int |u dx v w| + |Phi(u) dz v w| on the quadrature grid: the size the cancellation is measured against."""
    g = u.grid
    tr = g.transforms
    U = tr.sx @ u.coeffs @ tr.czt
    Vx = tr.cx @ (tr.kx[:, None] * v.coeffs) @ tr.czt
    Th = tr.cx @ (tr.phi_fac * u.coeffs[:, 1:]) @ tr.szt
    Vz = tr.sx @ (-tr.mz[None, :] * v.coeffs[:, 1:]) @ tr.szt
    W = tr.sx @ w.coeffs @ tr.czt
    wx, wz = g.quad_weights
    return float((np.abs(U * Vx * W) + np.abs(Th * Vz * W)).sum() * wx * wz)


def _cancellation(grid, rng, count):
    worst_c = worst_a = 0.0
    for _ in range(count):
        u, v, w = (random_admissible(rng, grid) for _ in range(3))
        c = abs(trilinear_b(u, v, v)) / trilinear_scale(u, v, v)
        a = abs(trilinear_b(u, v, w) + trilinear_b(u, w, v)) / max(trilinear_scale(u, v, w), trilinear_scale(u, w, v))
        worst_c, worst_a = max(worst_c, c), max(worst_a, a)
    return [
        CheckResult("cancellation b(u,v,v)=0", worst_c <= TOL_CANCEL, worst_c, TOL_CANCEL, f"{count} random triples"),
        CheckResult("antisymmetry b(u,v,w)", worst_a <= TOL_CANCEL, worst_a, TOL_CANCEL, f"{count} random triples"),
    ]


def _projection(grid, rng):
    c = rng.standard_normal(grid.shape)
    f = Field(grid, c)
    p1 = project_H(f)
    p2 = project_H(p1)
    same = np.array_equal(p1.coeffs, p2.coeffs) and not np.any(p1.coeffs[:, 0])
    kept = np.array_equal(p1.coeffs[:, 1:], c[:, 1:])
    return CheckResult("projection idempotent", same and kept, 0.0 if same and kept else 1.0, 0.0,
                       "P(Pf) == Pf bitwise")


def _divergence(grid, rng, points=200):
    v = random_admissible(rng, grid)
    theta = phi(v)
    x = rng.uniform(0, grid.L, points)
    z = rng.uniform(-grid.h, 0, points)
    # dx v and dz Phi(v) both live in the cos(kx) cos(mz) basis
    k = np.arange(1, grid.Nx + 1) * math.pi / grid.L
    m_all = np.arange(grid.Nz + 1) * math.pi / grid.h
    cx = np.cos(np.outer(x, k))
    cz = np.cos(np.outer(z, m_all))
    dxv = np.einsum("pk,km,pm->p", cx, k[:, None] * v.coeffs, cz)
    dzphi = np.einsum("pk,km,pm->p", cx, theta.coeffs[1:, :] * m_all[None, 1:], cz[:, 1:])
    scale = float(np.abs(dxv).max()) + 1e-300
    err = float(np.abs(dxv + dzphi).max()) / scale
    # boundary values of Phi at z = -h and z = 0
    bdry = max(abs(eval_field(theta, 0.3 * grid.L, -grid.h)), abs(eval_field(theta, 0.3 * grid.L, 0.0)))
    err = max(err, bdry / scale)
    return CheckResult("divergence dx v + dz Phi", err <= TOL_DIVERGENCE, err, TOL_DIVERGENCE,
                       f"{points} random points, relative to max|dx v|")


def _eigenvalues(grid):
    worst = 0.0
    exact = True
    for k, m in [(1, 1), (2, 3), (grid.Nx, grid.Nz), (5, 1), (1, grid.Nz)]:
        if k > grid.Nx or m > grid.Nz:
            continue
        lam = (k * math.pi / grid.L) ** 2 + (m * math.pi / grid.h) ** 2
        f = Field.mode(grid, k, m)
        Af = apply_A(f).coeffs
        expect = np.zeros(grid.shape)
        expect[k - 1, m] = lam
        exact &= np.array_equal(Af, expect)
        worst = max(worst, abs(Af[k - 1, m] - lam) / lam)
    return CheckResult("Stokes eigenvalues", exact, worst, 0.0, "A e_km == lambda_km e_km bitwise")


def _scheme_checks(study: StudyConfig):
    grid = study.grid()
    noise = study.noise(grid)
    cfg = SplitConfig(study.T, 8, grid, noise, study.v0(grid), eps=0.2, det_steps=4, stoch_steps=4)
    path = sample_path(noise, 7, 8 * 4 * 2, study.T)
    hist = run_splitting(cfg, path)
    hand = all(np.array_equal(hist.v_plus[i], hist.eta_minus[i]) for i in range(cfg.n + 1))
    hand &= all(np.array_equal(hist.eta_traj[i, 0], hist.v_traj[i, -1]) for i in range(cfg.n))
    hand &= all(np.array_equal(hist.v_traj[i, 0], hist.eta_minus[i]) for i in range(cfg.n))
    defects = energy_defects(hist)
    worst = max(defects.values())
    mean_drift = max(float(np.abs(hist.v_traj[..., 0]).max()), float(np.abs(hist.eta_traj[..., 0]).max()))
    return [
        CheckResult("hand-off identities", hand, 0.0 if hand else 1.0, 0.0, "v(t_i+) == eta(t_i-) bitwise"),
        CheckResult("energy inequalities", worst <= TOL_ENERGY, max(worst, 0.0), TOL_ENERGY,
                    "|v|^2 and |dz v|^2 dissipation, relative"),
        CheckResult("zero vertical mean kept", mean_drift <= 1e-12, mean_drift, 1e-12, "max |c[:, 0]| along run"),
    ]


def run_checks(study: StudyConfig | None = None, triples: int = 100, seed: int = 0) -> list:
    study = study or StudyConfig()
    grid = study.grid()
    rng = np.random.default_rng(seed)
    results = []
    results += _cancellation(grid, rng, triples)
    results.append(_projection(grid, rng))
    results.append(_divergence(grid, rng))
    results.append(_eigenvalues(grid))
    results += _scheme_checks(study)
    return results
