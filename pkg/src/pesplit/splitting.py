"""The splitting-up scheme.

On each interval [t_i, t_{i+1}) of the uniform mesh the scheme first solves the
deterministic equation dv/dt + (1 - eps) A v + B(v, v) = 0 started from the
previous stochastic endpoint, then the linear stochastic equation
d eta + eps A eta dt = psi(eta) dW over the *same* interval, started from the
deterministic endpoint v(t_{i+1}^-).

Micro-integrators
-----------------
Deterministic substep: exact linear propagation exp(-(1 - eps) delta A)
followed by an implicit-midpoint step for the nonlinearity. The midpoint rule
keeps every quadratic invariant of the nonlinear flow, so |v| and |dz v| are
dissipated exactly as in the continuous equation.

Stochastic substep: semi-implicit Euler-Maruyama,
eta <- (I + eps delta A)^{-1} (eta + psi(eta) dW).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import kernels
from .errors import BlowUpError, ConfigurationError, CouplingError, ConstraintError, DomainError, ShapeError
from .grid import Field, Grid
from .noise import BrownianPath, NoiseModel, coarsen, psi_columns
from .operators import EpsilonSplit

__all__ = [
    "SplitConfig",
    "SchemeHistory",
    "MonitorResult",
    "mesh_maps",
    "deterministic_step",
    "stochastic_step",
    "run_splitting",
    "compute_Z",
    "monitor_stopping",
    "trajectory_norms",
    "energy_defects",
    "BLOWUP_FACTOR",
]

BLOWUP_FACTOR = 1e6


@dataclasses.dataclass(frozen=True, eq=False)
class SplitConfig:
    T: float
    n: int
    grid: Grid
    noise: NoiseModel
    v0: Field
    eps: float = 0.0
    det_steps: int = 8
    stoch_steps: int = 8
    nonlinear: bool = True
    tol: float = 1e-14
    maxiter: int = 60

    def __post_init__(self):
        EpsilonSplit(self.eps)
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigurationError(f"horizon must be positive, got {self.T}")
        for name in ("n", "det_steps", "stoch_steps"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {val}")
        if self.v0.grid != self.grid or self.noise.grid != self.grid:
            raise ShapeError("initial field, noise model and config must share one grid")
        if not self.v0.is_admissible:
            raise ConstraintError("initial field must have zero vertical mean")
        if not np.all(np.isfinite(self.v0.coeffs)):
            raise ConfigurationError("initial field has non-finite coefficients")

    @property
    def mesh(self) -> float:
        return self.T / self.n

    def replace(self, **changes) -> "SplitConfig":
        return dataclasses.replace(self, **changes)


def blowup_limit(v0: np.ndarray) -> float:
    """Amplitude beyond which a run counts as exploded (initial amplitude floored at 1)."""
    return BLOWUP_FACTOR * max(float(np.abs(v0).max()), 1.0)


def mesh_maps(t: float, cfg: SplitConfig) -> tuple[float, float]:
    """(d_n(t), d*_n(t)): left and right mesh points around t; the last interval is closed."""
    T, n = cfg.T, cfg.n
    if not (0.0 <= t <= T):
        raise DomainError(f"t={t} outside [0, {T}]")
    i = min(int(math.floor(t * n / T)), n - 1)
    # floor can land one interval too far right when t*n/T rounds up
    if i > 0 and t < i * T / n:
        i -= 1
    return i * T / n, (i + 1) * T / n


def _run(kern_args, c0, out, interval, cfg, limit):
    status, step = kernels.advance(c0, *kern_args, out, tol=cfg.tol, maxiter=cfg.maxiter, blowup_limit=limit)
    if status == kernels.BLOWUP:
        raise BlowUpError(f"amplitude exceeded the blow-up guard in interval {interval}, micro-step {step}",
                          interval=interval, step=step)
    if status == kernels.NO_CONVERGENCE:
        raise BlowUpError(f"nonlinear solve did not converge in interval {interval}, micro-step {step}; "
                          "use more micro-steps", interval=interval, step=step)


def _no_noise(grid):
    return (np.zeros((0,) + grid.shape), np.zeros(0), np.zeros(0), np.zeros((0, 0)))


class _Stepper:
    """Precomputed micro-step factors for substeps of length ``span`` (default T/n)."""

    def __init__(self, cfg: SplitConfig, span: float | None = None):
        g = cfg.grid
        lam = g.eigenvalues
        span = cfg.mesh if span is None else span
        self.cfg = cfg
        self.nu = 1.0 - cfg.eps
        self.dt_det = span / cfg.det_steps
        self.dt_sto = span / cfg.stoch_steps
        self.lin_det = np.ascontiguousarray(np.exp(-self.nu * self.dt_det * lam))
        self.impl_sto = np.ascontiguousarray(1.0 / (1.0 + cfg.eps * self.dt_sto * lam))
        self.ones = np.ones(g.shape)
        self.limit = blowup_limit(cfg.v0.coeffs)
        self.tr = g.transforms
        self.weights = np.ascontiguousarray(g.weights)
        nz = _no_noise(g)
        self.det_args = (self.dt_det, self.lin_det, self.ones, cfg.nonlinear, self.tr,
                         nz[0], nz[1], nz[2], self.weights, nz[3])
        m = cfg.noise
        self.noise = (np.ascontiguousarray(m.shapes), np.ascontiguousarray(m.add_amp),
                      np.ascontiguousarray(m.mult_amp))

    def deterministic(self, c0, interval=None):
        out = np.empty((self.cfg.det_steps + 1,) + self.cfg.grid.shape)
        _run(self.det_args, c0, out, interval, self.cfg, self.limit)
        return out

    def stochastic(self, c0, dw, interval=None):
        cfg = self.cfg
        out = np.empty((cfg.stoch_steps + 1,) + cfg.grid.shape)
        args = (self.dt_sto, self.ones, self.impl_sto, False, self.tr,
                self.noise[0], self.noise[1], self.noise[2], self.weights,
                np.ascontiguousarray(dw))
        _run(args, c0, out, interval, cfg, self.limit)
        return out


def _check_times(t_start, t_end):
    if not (0.0 <= t_start < t_end and math.isfinite(t_end)):
        raise DomainError(f"need 0 <= t_start < t_end, got [{t_start}, {t_end}]")
    return t_end - t_start


def deterministic_step(v_init: Field, t_start: float, t_end: float, cfg: SplitConfig) -> Field:
    """v^n(t_end^-) from v^n(t_start) = v_init, using ``cfg.det_steps`` micro-steps over the span."""
    span = _check_times(t_start, t_end)
    if not v_init.is_admissible:
        raise ConstraintError("deterministic_step needs an admissible field")
    traj = _Stepper(cfg, span).deterministic(np.ascontiguousarray(v_init.coeffs))
    return Field(cfg.grid, traj[-1])


def stochastic_step(eta_init: Field, t_start: float, t_end: float, cfg: SplitConfig, increments) -> Field:
    """eta^n(t_end^-) from eta_init; ``increments`` has shape (stoch_steps, m_W)."""
    span = _check_times(t_start, t_end)
    dw = np.asarray(increments, dtype=np.float64)
    if dw.shape != (cfg.stoch_steps, cfg.noise.m_W):
        raise ShapeError(f"increments must have shape {(cfg.stoch_steps, cfg.noise.m_W)}, got {dw.shape}")
    if not eta_init.is_admissible:
        raise ConstraintError("stochastic_step needs an admissible field")
    traj = _Stepper(cfg, span).stochastic(np.ascontiguousarray(eta_init.coeffs), dw)
    return Field(cfg.grid, traj[-1])


def trajectory_norms(traj: np.ndarray, grid: Grid) -> dict:
    """|u|, ||u||, |dz u|, ||dz u|| for a stack of coefficient arrays (..., Nx, Nz+1)."""
    w = grid.weights
    lam = grid.eigenvalues
    mz2 = grid.mz[None, :] ** 2
    c2w = traj ** 2 * w
    return {
        "h": np.sqrt(c2w.sum(axis=(-2, -1))),
        "v": np.sqrt((c2w * lam).sum(axis=(-2, -1))),
        "dz_h": np.sqrt((c2w * mz2).sum(axis=(-2, -1))),
        "dz_v": np.sqrt((c2w * mz2 * lam).sum(axis=(-2, -1))),
    }


@dataclasses.dataclass(eq=False)
class SchemeHistory:
    """Everything recorded along one splitting trajectory.

    ``v_traj[i, j]`` is v^n(t_i + j * delta) on the deterministic micro-grid of
    interval i (j = 0 is v^n(t_i^+), j = det_steps is v^n(t_{i+1}^-)); likewise
    ``eta_traj`` on the stochastic micro-grid. ``v_plus[k]`` is v^n(t_k^+) and
    ``eta_minus[k]`` is eta^n(t_k^-) for k = 0..n.
    """

    cfg: SplitConfig
    v_traj: np.ndarray
    eta_traj: np.ndarray
    v_plus: np.ndarray
    eta_minus: np.ndarray
    increments: np.ndarray        # (n, stoch_steps, m_W)
    provenance: object
    v_norms: dict = None
    eta_norms: dict = None
    dissipation_v: np.ndarray = None   # (n, det_steps) exact int ||v^n||^2 over each micro-step
    dissipation_r: np.ndarray = None   # (n, det_steps) exact int ||dz v^n||^2 over each micro-step

    def __post_init__(self):
        g = self.cfg.grid
        self.v_norms = trajectory_norms(self.v_traj, g)
        self.eta_norms = trajectory_norms(self.eta_traj, g)
        nu = 1.0 - self.cfg.eps
        dt = self.cfg.mesh / self.cfg.det_steps
        lam = g.eigenvalues
        # int_0^dt ||exp(-nu s A) c||^2 ds = sum c^2 w (1 - exp(-2 nu lam dt)) / (2 nu)
        factor = (1.0 - np.exp(-2.0 * nu * lam * dt)) / (2.0 * nu)
        c2w = self.v_traj[:, :-1] ** 2 * g.weights
        self.dissipation_v = (c2w * factor).sum(axis=(-2, -1))
        self.dissipation_r = (c2w * factor * g.mz[None, :] ** 2).sum(axis=(-2, -1))

    @property
    def n(self) -> int:
        return self.cfg.n

    def mesh_times(self) -> np.ndarray:
        return np.linspace(0.0, self.cfg.T, self.cfg.n + 1)

    def det_times(self) -> np.ndarray:
        cfg = self.cfg
        j = np.arange(cfg.det_steps + 1)
        return (np.arange(cfg.n)[:, None] * cfg.det_steps + j[None, :]) * (cfg.mesh / cfg.det_steps)

    def v_field(self, k: int) -> Field:
        return Field(self.cfg.grid, self.v_plus[k])

    def eta_field(self, k: int) -> Field:
        return Field(self.cfg.grid, self.eta_minus[k])


def _scheme_increments(cfg: SplitConfig, path: BrownianPath) -> BrownianPath:
    target = cfg.n * cfg.stoch_steps
    if path.m_W != cfg.noise.m_W:
        raise ShapeError(f"path has {path.m_W} channels, noise model {cfg.noise.m_W}")
    if not math.isclose(path.T, cfg.T, rel_tol=1e-12):
        raise ConfigurationError("path horizon differs from the scheme horizon")
    if path.n % target:
        raise ConfigurationError(f"path with {path.n} increments cannot be coarsened to {target} micro-steps")
    return coarsen(path, path.n // target)


def run_splitting(cfg: SplitConfig, path: BrownianPath) -> SchemeHistory:
    """Run the scheme over [0, T] on one Brownian path."""
    coarse = _scheme_increments(cfg, path)
    dw = np.ascontiguousarray(coarse.increments.T.reshape(cfg.n, cfg.stoch_steps, cfg.noise.m_W))
    stepper = _Stepper(cfg)
    shape = cfg.grid.shape
    v_traj = np.empty((cfg.n, cfg.det_steps + 1) + shape)
    eta_traj = np.empty((cfg.n, cfg.stoch_steps + 1) + shape)
    v_plus = np.empty((cfg.n + 1,) + shape)
    eta_minus = np.empty((cfg.n + 1,) + shape)
    eta_minus[0] = cfg.v0.coeffs
    for i in range(cfg.n):
        v_plus[i] = eta_minus[i]
        v_traj[i] = stepper.deterministic(v_plus[i], interval=i)
        eta_traj[i] = stepper.stochastic(v_traj[i, -1], dw[i], interval=i)
        eta_minus[i + 1] = eta_traj[i, -1]
    v_plus[cfg.n] = eta_minus[cfg.n]
    return SchemeHistory(cfg, v_traj, eta_traj, v_plus, eta_minus, dw, coarse.provenance)


def energy_defects(history: SchemeHistory) -> dict:
    """Worst relative violation of the per-interval dissipation inequalities.

    For t in [t_i, t_{i+1}):
        |v^n(t)|^2  + 2 (1 - eps) int_{t_i}^t ||v^n||^2  <= |eta^n(t_i^-)|^2
        |dz v^n(t)|^2 + 2 (1 - eps) int_{t_i}^t ||dz v^n||^2 <= |dz eta^n(t_i^-)|^2
    A defect <= 0 means the inequality holds; values are divided by the
    right-hand side (floored at the smallest positive normal).
    """
    nu = 1.0 - history.cfg.eps
    out = {}
    for key, energy_key, diss in (("v", "h", history.dissipation_v), ("r", "dz_h", history.dissipation_r)):
        energy = history.v_norms[energy_key] ** 2                      # (n, J+1)
        cum = np.concatenate([np.zeros((history.n, 1)), np.cumsum(diss, axis=1)], axis=1)
        lhs = energy + 2.0 * nu * cum
        rhs = energy[:, :1]      # v^n(t_i^+) = eta^n(t_i^-)
        scale = np.maximum(rhs, np.finfo(float).tiny)
        out[key] = float(np.max((lhs - rhs) / scale))
    return out


def compute_Z(history: SchemeHistory, path: BrownianPath | None = None, cfg: SplitConfig | None = None) -> dict:
    """Auxiliary process on the micro-grid.

    Z(t) = v0 - int_0^t F_eps(v^n) ds - eps int_0^{d_n(t)} A eta^n ds + int_0^t psi(eta^n) dW

    The drift integral over each micro-step is the exact linear integral plus
    the midpoint-rule value of B, re-evaluated from the recorded states; the
    eps A eta integral uses the implicit (right-endpoint) rule of the
    stochastic substep and the Ito integral uses left endpoints.

    Returns ``{"micro": (n, J+1, Nx, Nz+1), "mesh": (n+1, Nx, Nz+1), "times": (n, J+1)}``.
    ``micro[i, J]`` is the left limit Z(t_{i+1}^-); ``mesh[k]`` is Z(t_k).
    """
    cfg = cfg or history.cfg
    if path is not None and path.provenance != history.provenance:
        raise CouplingError("compute_Z called with a different Brownian path")
    if cfg.det_steps != cfg.stoch_steps:
        raise ConfigurationError("compute_Z needs matching deterministic and stochastic micro-grids")
    g = cfg.grid
    J, n = cfg.det_steps, cfg.n
    delta = cfg.mesh / J
    nu = 1.0 - cfg.eps
    lam = g.eigenvalues
    lin = np.exp(-nu * delta * lam)
    tr = g.transforms
    noise = cfg.noise

    drift = np.zeros((n, J) + g.shape)
    for i in range(n):
        for j in range(J):
            c = history.v_traj[i, j]
            w = lin * c
            lin_part = c - w
            if cfg.nonlinear:
                bar = 0.5 * (w + history.v_traj[i, j + 1])
                lin_part = lin_part + delta * kernels.nonlinear(bar, bar, tr)
            drift[i, j] = lin_part

    ito = np.zeros((n, J) + g.shape)
    visc = np.zeros((n, J) + g.shape)
    for i in range(n):
        for j in range(J):
            eta = history.eta_traj[i, j]
            if noise.m_W:
                ito[i, j] = np.tensordot(history.increments[i, j], psi_columns(noise, eta), axes=(0, 0))
            visc[i, j] = cfg.eps * delta * lam * history.eta_traj[i, j + 1]

    micro = np.empty((n, J + 1) + g.shape)
    mesh = np.empty((n + 1,) + g.shape)
    v0 = cfg.v0.coeffs
    visc_done = np.zeros(g.shape)     # eps int_0^{d_n(t)} A eta
    running_drift = np.zeros(g.shape)
    running_ito = np.zeros(g.shape)
    mesh[0] = v0
    for i in range(n):
        for j in range(J + 1):
            micro[i, j] = v0 - running_drift - visc_done + running_ito
            if j < J:
                running_drift = running_drift + drift[i, j]
                running_ito = running_ito + ito[i, j]
        # d_n jumps to t_{i+1} at t_{i+1}, except on the closed last interval
        if i < n - 1:
            visc_done = visc_done + visc[i].sum(axis=0)
        mesh[i + 1] = v0 - running_drift - visc_done + running_ito
    return {"micro": micro, "mesh": mesh, "times": history.det_times()}


@dataclasses.dataclass(frozen=True)
class MonitorResult:
    tau_N_hit: float | None
    sigma_M_hit: float | None
    omega_flag: bool
    reference_used: bool
    max_interval_integral: float     # max_i int_{t_i}^{t_{i+1}} (|v|^2 ||v||^2 + |r| ||r||)
    sigma_integral: float            # int_0^T (||v|| + ||v^n||^2 + |r^n|^4)


def _first_crossing(cum: np.ndarray, times: np.ndarray, threshold: float):
    if not math.isfinite(threshold):
        return None
    hit = np.nonzero(cum > threshold)[0]
    return float(times[hit[0]]) if hit.size else None


def monitor_stopping(history: SchemeHistory, N: float, M: float, reference=None) -> MonitorResult:
    """First exits of the two trajectory integrals used to define the good event.

    Integrals are left-endpoint sums on the deterministic micro-grid. The
    ||v|| term of the second integral comes from ``reference`` (a
    :class:`pesplit.reference.ReferenceTrajectory`); without one it is left
    out and ``reference_used`` is False.
    """
    cfg = history.cfg
    J, n = cfg.det_steps, cfg.n
    delta = cfg.mesh / J
    vn = history.v_norms
    times = history.det_times()
    f_tau = (vn["h"] ** 2 * vn["v"] ** 2 + vn["dz_h"] * vn["dz_v"])[:, :J] * delta
    per_interval = np.cumsum(f_tau, axis=1)                      # value at t_i + (j+1) delta
    tau_hit = None
    if math.isfinite(N):
        thr = N / n
        for i in range(n):
            hit = np.nonzero(per_interval[i] > thr)[0]
            if hit.size:
                tau_hit = float(times[i, hit[0] + 1])
                break

    f_sig = (vn["v"] ** 2 + vn["dz_h"] ** 4)[:, :J]
    used = reference is not None
    if used:
        ref_v = reference.norms_at(n * J)["v"][:-1].reshape(n, J)
        f_sig = f_sig + ref_v
    cum = np.cumsum((f_sig * delta).ravel())
    sigma_hit = _first_crossing(cum, times[:, 1:].ravel(), M)
    return MonitorResult(
        tau_N_hit=tau_hit,
        sigma_M_hit=sigma_hit,
        omega_flag=tau_hit is None and sigma_hit is None,
        reference_used=used,
        max_interval_integral=float(per_interval[:, -1].max()),
        sigma_integral=float(cum[-1]),
    )
