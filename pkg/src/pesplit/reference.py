"""Fine-resolution solver for the unsplit equation dv + (A v + B(v, v)) dt = psi(v) dW.

One micro-step: exact heat propagation, implicit-midpoint nonlinearity, then
the Ito noise increment evaluated at the step's left state. The solver runs on
coarsenings of the same fine Brownian path as the schemes it benchmarks.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import kernels
from .errors import BlowUpError, ConfigurationError, ConstraintError, ShapeError
from .grid import Field, Grid
from .noise import BrownianPath, NoiseModel, coarsen
from .splitting import blowup_limit, trajectory_norms

__all__ = ["ReferenceConfig", "ReferenceTrajectory", "run_reference"]


@dataclasses.dataclass(frozen=True, eq=False)
class ReferenceConfig:
    T: float
    n_ref: int
    grid: Grid
    noise: NoiseModel
    v0: Field
    micro_steps: int = 1
    nonlinear: bool = True
    tol: float = 1e-14
    maxiter: int = 60

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigurationError(f"horizon must be positive, got {self.T}")
        for name in ("n_ref", "micro_steps"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {val}")
        if self.v0.grid != self.grid or self.noise.grid != self.grid:
            raise ShapeError("initial field, noise model and config must share one grid")
        if not self.v0.is_admissible:
            raise ConstraintError("initial field must have zero vertical mean")

    @property
    def n_fine(self) -> int:
        return self.n_ref * self.micro_steps

    def check_divides(self, n_list) -> None:
        bad = [n for n in n_list if self.n_ref % n]
        if bad:
            raise ConfigurationError(f"n_ref={self.n_ref} is not a multiple of {bad}")


@dataclasses.dataclass(eq=False)
class ReferenceTrajectory:
    """States v(k T / n_ref) for k = 0..n_ref and their norms."""

    cfg: ReferenceConfig
    states: np.ndarray
    provenance: object
    norms: dict = None

    def __post_init__(self):
        self.norms = trajectory_norms(self.states, self.cfg.grid)

    @property
    def T(self) -> float:
        return self.cfg.T

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.cfg.T, self.cfg.n_ref + 1)

    def _stride(self, count: int) -> int:
        if count < 1 or self.cfg.n_ref % count:
            raise ConfigurationError(f"{count} sampling intervals do not nest in n_ref={self.cfg.n_ref}")
        return self.cfg.n_ref // count

    def at_nodes(self, count: int) -> np.ndarray:
        """States at k T / count, k = 0..count."""
        return self.states[:: self._stride(count)]

    def norms_at(self, count: int) -> dict:
        s = self._stride(count)
        return {k: v[::s] for k, v in self.norms.items()}

    def field(self, k: int) -> Field:
        return Field(self.cfg.grid, self.states[k])


def run_reference(cfg: ReferenceConfig, path: BrownianPath) -> ReferenceTrajectory:
    if path.m_W != cfg.noise.m_W:
        raise ShapeError(f"path has {path.m_W} channels, noise model {cfg.noise.m_W}")
    if not math.isclose(path.T, cfg.T, rel_tol=1e-12):
        raise ConfigurationError("path horizon differs from the reference horizon")
    if path.n % cfg.n_fine:
        raise ConfigurationError(f"path with {path.n} increments cannot be coarsened to {cfg.n_fine} steps")
    coarse = coarsen(path, path.n // cfg.n_fine)
    J = cfg.micro_steps
    dw = np.ascontiguousarray(coarse.increments.T.reshape(cfg.n_ref, J, cfg.noise.m_W))

    g = cfg.grid
    delta = cfg.T / cfg.n_fine
    lin = np.ascontiguousarray(np.exp(-delta * g.eigenvalues))
    ones = np.ones(g.shape)
    m = cfg.noise
    shapes = np.ascontiguousarray(m.shapes)
    weights = np.ascontiguousarray(g.weights)
    limit = blowup_limit(cfg.v0.coeffs)

    states = np.empty((cfg.n_ref + 1,) + g.shape)
    states[0] = cfg.v0.coeffs
    buf = np.empty((J + 1,) + g.shape)
    for k in range(cfg.n_ref):
        status, step = kernels.advance(states[k], delta, lin, ones, cfg.nonlinear, g.transforms,
                                       shapes, m.add_amp, m.mult_amp, weights, dw[k], out=buf,
                                       tol=cfg.tol, maxiter=cfg.maxiter, blowup_limit=limit)
        if status != kernels.OK:
            what = "blow-up guard" if status == kernels.BLOWUP else "nonlinear solve failed"
            raise BlowUpError(f"reference: {what} in fine interval {k}, micro-step {step}",
                              interval=k, step=step)
        states[k + 1] = buf[-1]
    return ReferenceTrajectory(cfg, states, coarse.provenance)
