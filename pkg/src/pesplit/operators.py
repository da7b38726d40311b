"""Spatial operators: projection, Stokes operator, vertical velocity, nonlinearity.

The pressure is never stored. It depends on x only, so its gradient lives in
the m = 0 modes and disappears under :func:`project_H`.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import kernels
from .errors import ConfigurationError, ConstraintError, ShapeError
from .grid import Field, ThetaField, l2_inner

__all__ = [
    "EpsilonSplit",
    "project_H",
    "apply_A",
    "solve_helmholtz",
    "phi",
    "nonlinear_B",
    "trilinear_b",
    "drift_F",
]


@dataclasses.dataclass(frozen=True)
class EpsilonSplit:
    """Share of the viscosity moved into the stochastic substep, 0 <= eps < 1."""

    eps: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.eps < 1.0):
            raise ConfigurationError(f"eps must lie in [0, 1), got {self.eps}")


def _as_eps(eps) -> float:
    return eps.eps if isinstance(eps, EpsilonSplit) else EpsilonSplit(float(eps)).eps


def _require_admissible(f: Field, what: str):
    if not isinstance(f, Field):
        raise TypeError(f"{what} expects a Field, got {type(f).__name__}")
    if np.any(f.coeffs[:, 0]):
        raise ConstraintError(f"{what}: field has a nonzero vertical mean; call project_H first")


def project_H(f: Field) -> Field:
    """Remove the vertical mean (all m = 0 coefficients)."""
    if f.is_admissible:
        return f
    c = f.coeffs.copy()
    c[:, 0] = 0.0
    return Field(f.grid, c)


def apply_A(v: Field) -> Field:
    _require_admissible(v, "apply_A")
    return Field(v.grid, v.coeffs * v.grid.eigenvalues)


def solve_helmholtz(f: Field, c: float) -> Field:
    """Return (I + c A)^{-1} f."""
    _require_admissible(f, "solve_helmholtz")
    if c < 0:
        raise ConfigurationError("solve_helmholtz needs c >= 0")
    return Field(f.grid, f.coeffs / (1.0 + c * f.grid.eigenvalues))


def phi(v: Field) -> ThetaField:
    """Vertical velocity -int_{-h}^z dx v dz' in the cos(kx) sin(mz) basis."""
    _require_admissible(v, "phi")
    tr = v.grid.transforms
    d = np.zeros(ThetaField.coeff_shape(v.grid))
    d[1:, :] = tr.phi_fac * v.coeffs[:, 1:]
    return ThetaField(v.grid, d)


def nonlinear_B(u: Field, v: Field) -> Field:
    _require_admissible(u, "nonlinear_B")
    _require_admissible(v, "nonlinear_B")
    if u.grid != v.grid:
        raise ShapeError("nonlinear_B: fields live on different grids")
    return Field(u.grid, kernels.nonlinear(u.coeffs, v.coeffs, u.grid.transforms))


def trilinear_b(u: Field, v: Field, w: Field) -> float:
    """b(u, v, w) = int (u dx v + Phi(u) dz v) w."""
    _require_admissible(w, "trilinear_b")
    if w.grid != u.grid:
        raise ShapeError("trilinear_b: fields live on different grids")
    return l2_inner(nonlinear_B(u, v), w)


def drift_F(v: Field, eps=0.0) -> Field:
    """(1 - eps) A v + B(v, v)."""
    e = _as_eps(eps)
    return apply_A(v) * (1.0 - e) + nonlinear_B(v, v)
