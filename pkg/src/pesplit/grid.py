"""Spectral discretisation of the box [0, L] x [-h, 0].

The horizontal velocity is expanded as

    v(x, z) = sum_{k=1..Nx, m=0..Nz} c[k, m] sin(k pi x / L) cos(m pi z / h)

so that v = 0 on the lateral walls and dv/dz = 0 on the top and bottom hold
exactly. A field has zero vertical mean iff every m = 0 coefficient vanishes.
The vertical velocity lives in the cos(k pi x / L) sin(m pi z / h) basis and
vertical derivatives of v in the sin * sin basis.

Products of three retained basis functions are trigonometric polynomials of
degree at most 3N in each direction. A midpoint rule with Q > 3N/2 nodes
integrates them exactly, which is what the padded quadrature grid provides.
"""

from __future__ import annotations

import dataclasses
import functools
import math

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError

__all__ = [
    "Grid",
    "Field",
    "ThetaField",
    "DzField",
    "make_grid",
    "eval_field",
    "l2_inner",
    "norms",
    "dz_field",
    "min_quadrature_nodes",
]


def min_quadrature_nodes(n_modes: int) -> int:
    """Smallest midpoint-rule size that is exact for triple products."""
    return (3 * n_modes) // 2 + 1


@dataclasses.dataclass(frozen=True)
class Grid:
    L: float
    h: float
    Nx: int
    Nz: int
    Qx: int
    Qz: int

    def __post_init__(self):
        if not (self.L > 0 and self.h > 0):
            raise ConfigurationError(f"domain sizes must be positive, got L={self.L}, h={self.h}")
        if self.Nx < 1 or self.Nz < 1:
            raise ConfigurationError(f"mode counts must be >= 1, got Nx={self.Nx}, Nz={self.Nz}")
        if self.Qx < min_quadrature_nodes(self.Nx) or self.Qz < min_quadrature_nodes(self.Nz):
            raise ConfigurationError("quadrature too coarse for exact triple products")

    @property
    def shape(self) -> tuple[int, int]:
        """Coefficient shape of a velocity field."""
        return (self.Nx, self.Nz + 1)

    @functools.cached_property
    def kx(self) -> np.ndarray:
        """Horizontal wavenumbers k pi / L, k = 1..Nx."""
        return np.arange(1, self.Nx + 1) * (math.pi / self.L)

    @functools.cached_property
    def mz(self) -> np.ndarray:
        """Vertical wavenumbers m pi / h, m = 0..Nz."""
        return np.arange(0, self.Nz + 1) * (math.pi / self.h)

    @functools.cached_property
    def eigenvalues(self) -> np.ndarray:
        lam = self.kx[:, None] ** 2 + self.mz[None, :] ** 2
        lam.setflags(write=False)
        return lam

    @functools.cached_property
    def weights(self) -> np.ndarray:
        """Squared L2 norms of the sin * cos basis functions."""
        w = np.full(self.shape, 0.25 * self.L * self.h)
        w[:, 0] = 0.5 * self.L * self.h
        w.setflags(write=False)
        return w

    @functools.cached_property
    def admissible_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[:, 0] = False
        return mask

    @functools.cached_property
    def x_nodes(self) -> np.ndarray:
        return (np.arange(self.Qx) + 0.5) * (self.L / self.Qx)

    @functools.cached_property
    def z_nodes(self) -> np.ndarray:
        return -self.h + (np.arange(self.Qz) + 0.5) * (self.h / self.Qz)

    @functools.cached_property
    def quad_weights(self) -> tuple[float, float]:
        return self.L / self.Qx, self.h / self.Qz

    @functools.cached_property
    def transforms(self) -> "Transforms":
        return Transforms.build(self)


@dataclasses.dataclass(frozen=True, eq=False)
class Transforms:
    """Dense synthesis/analysis matrices between coefficients and quadrature nodes.

    All arrays are C-contiguous float64 so that compiled kernels can hand them
    straight to BLAS.
    """

    sx: np.ndarray      # (Qx, Nx)    sin(k x)
    cx: np.ndarray      # (Qx, Nx)    cos(k x), k >= 1
    czt: np.ndarray     # (Nz+1, Qz)  cos(m z)^T
    szt: np.ndarray     # (Nz, Qz)    sin(m z)^T, m >= 1
    ax: np.ndarray      # (Nx, Qx)    analysis onto sin(k x)
    az: np.ndarray      # (Qz, Nz+1)  analysis onto cos(m z)
    kx: np.ndarray      # (Nx,)
    mz: np.ndarray      # (Nz,)       m >= 1
    phi_fac: np.ndarray  # (Nx, Nz)   -(k pi/L) (h/(m pi))

    @classmethod
    def build(cls, grid: Grid) -> "Transforms":
        x, z = grid.x_nodes, grid.z_nodes
        kx, mz_all = grid.kx, grid.mz
        mz = mz_all[1:]
        sx = np.sin(np.outer(x, kx))
        cx = np.cos(np.outer(x, kx))
        cz = np.cos(np.outer(z, mz_all))
        sz = np.sin(np.outer(z, mz))
        wx, wz = grid.quad_weights
        norm_z = np.where(np.arange(grid.Nz + 1) == 0, grid.h, 0.5 * grid.h)
        ax = (wx / (0.5 * grid.L)) * sx.T
        az = (wz * cz) / norm_z[None, :]
        phi_fac = -kx[:, None] / mz[None, :]
        arrays = dict(
            sx=sx, cx=cx, czt=cz.T, szt=sz.T, ax=ax, az=az,
            kx=kx, mz=mz, phi_fac=phi_fac,
        )
        return cls(**{k: np.ascontiguousarray(v, dtype=np.float64) for k, v in arrays.items()})


def make_grid(L: float, h: float, Nx: int, Nz: int, Qx: int | None = None, Qz: int | None = None) -> Grid:
    """Build a grid whose quadrature is exact for products of three modes.

    ``Qx``/``Qz`` may be raised above the minimum, never lowered below it.
    """
    try:
        L, h = float(L), float(h)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"non-numeric domain size: {exc}") from None
    if not (math.isfinite(L) and math.isfinite(h)) or L <= 0 or h <= 0:
        raise ConfigurationError(f"domain sizes must be positive and finite, got L={L}, h={h}")
    if int(Nx) != Nx or int(Nz) != Nz or Nx < 1 or Nz < 1:
        raise ConfigurationError(f"mode counts must be integers >= 1, got Nx={Nx}, Nz={Nz}")
    Nx, Nz = int(Nx), int(Nz)
    qx_min, qz_min = min_quadrature_nodes(Nx), min_quadrature_nodes(Nz)
    Qx = qx_min if Qx is None else int(Qx)
    Qz = qz_min if Qz is None else int(Qz)
    if Qx < qx_min or Qz < qz_min:
        raise ConfigurationError(f"quadrature must have at least {qx_min}x{qz_min} nodes")
    return Grid(L, h, Nx, Nz, Qx, Qz)


class _Spectral:
    """Shared behaviour of the three coefficient layouts."""

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid: Grid, coeffs=None):
        shape = self.coeff_shape(grid)
        if coeffs is None:
            arr = np.zeros(shape)
        else:
            arr = np.array(coeffs, dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{type(self).__name__} needs coefficients of shape {shape}, got {arr.shape}")
        arr.setflags(write=False)
        self.grid = grid
        self.coeffs = arr

    @staticmethod
    def coeff_shape(grid: Grid) -> tuple[int, int]:
        raise NotImplementedError

    def _check_same(self, other):
        if type(other) is not type(self):
            raise ShapeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.grid != self.grid:
            raise ShapeError("fields live on different grids")

    def __add__(self, other):
        self._check_same(other)
        return type(self)(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_same(other)
        return type(self)(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return type(self)(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return type(self)(self.grid, -self.coeffs)

    def __repr__(self):
        g = self.grid
        return f"{type(self).__name__}(Nx={g.Nx}, Nz={g.Nz}, max|c|={np.abs(self.coeffs).max():.3g})"


class Field(_Spectral):
    """Velocity-like field in the sin(kx) cos(mz) basis, shape (Nx, Nz+1)."""

    __slots__ = ()

    @staticmethod
    def coeff_shape(grid):
        return (grid.Nx, grid.Nz + 1)

    @classmethod
    def mode(cls, grid: Grid, k: int, m: int, amplitude: float = 1.0) -> "Field":
        if not (1 <= k <= grid.Nx and 0 <= m <= grid.Nz):
            raise ShapeError(f"mode ({k}, {m}) not retained on this grid")
        c = np.zeros(cls.coeff_shape(grid))
        c[k - 1, m] = amplitude
        return cls(grid, c)

    @property
    def is_admissible(self) -> bool:
        return not np.any(self.coeffs[:, 0])


class ThetaField(_Spectral):
    """Field in the cos(kx) sin(mz) basis, k = 0..Nx, m = 1..Nz."""

    __slots__ = ()

    @staticmethod
    def coeff_shape(grid):
        return (grid.Nx + 1, grid.Nz)


class DzField(_Spectral):
    """Field in the sin(kx) sin(mz) basis, k = 1..Nx, m = 1..Nz (vertical derivatives of v)."""

    __slots__ = ()

    @staticmethod
    def coeff_shape(grid):
        return (grid.Nx, grid.Nz)


def _check_point(grid: Grid, x, z):
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    tol_x, tol_z = 1e-12 * grid.L, 1e-12 * grid.h
    if np.any(x < -tol_x) or np.any(x > grid.L + tol_x) or np.any(z < -grid.h - tol_z) or np.any(z > tol_z):
        raise DomainError("point outside [0, L] x [-h, 0]")
    return x, z


def eval_field(f: _Spectral, x, z):
    """Evaluate the spectral sum at point(s) (x, z); broadcasts over arrays."""
    g = f.grid
    x, z = _check_point(g, x, z)
    k = np.arange(f.coeffs.shape[0])
    m = np.arange(f.coeffs.shape[1])
    if isinstance(f, Field):
        bx = np.sin(np.multiply.outer(x, (k + 1) * math.pi / g.L))
        bz = np.cos(np.multiply.outer(z, m * math.pi / g.h))
    elif isinstance(f, ThetaField):
        bx = np.cos(np.multiply.outer(x, k * math.pi / g.L))
        bz = np.sin(np.multiply.outer(z, (m + 1) * math.pi / g.h))
    elif isinstance(f, DzField):
        bx = np.sin(np.multiply.outer(x, (k + 1) * math.pi / g.L))
        bz = np.sin(np.multiply.outer(z, (m + 1) * math.pi / g.h))
    else:
        raise TypeError(f"cannot evaluate {type(f).__name__}")
    val = np.einsum("...k,km,...m->...", bx, f.coeffs, bz)
    return float(val) if val.ndim == 0 else val


def _weights_for(f: _Spectral) -> np.ndarray:
    g = f.grid
    if isinstance(f, Field):
        return g.weights
    if isinstance(f, ThetaField):
        w = np.full(f.coeffs.shape, 0.25 * g.L * g.h)
        w[0, :] = 0.5 * g.L * g.h
        return w
    return np.full(f.coeffs.shape, 0.25 * g.L * g.h)


def _eigen_for(f: _Spectral) -> np.ndarray:
    g = f.grid
    if isinstance(f, Field):
        return g.eigenvalues
    if isinstance(f, ThetaField):
        k = np.arange(g.Nx + 1) * math.pi / g.L
        return k[:, None] ** 2 + g.mz[None, 1:] ** 2
    return g.kx[:, None] ** 2 + g.mz[None, 1:] ** 2


def l2_inner(u: _Spectral, v: _Spectral) -> float:
    """Exact L2 inner product over the box, computed from coefficients."""
    u._check_same(v)
    return float(np.sum(u.coeffs * v.coeffs * _weights_for(u)))


def norms(v: _Spectral) -> tuple[float, float, float]:
    """Return (|v|, ||v||, |Av|): L2 norm, gradient seminorm and Stokes-operator norm."""
    c2w = v.coeffs ** 2 * _weights_for(v)
    lam = _eigen_for(v)
    return (
        math.sqrt(float(c2w.sum())),
        math.sqrt(float((lam * c2w).sum())),
        math.sqrt(float((lam ** 2 * c2w).sum())),
    )


def dz_field(v: Field) -> DzField:
    """Exact vertical derivative: sin(kx)cos(mz) -> -(m pi/h) sin(kx) sin(mz)."""
    if not isinstance(v, Field):
        raise TypeError("dz_field expects a Field")
    return DzField(v.grid, -v.coeffs[:, 1:] * v.grid.mz[None, 1:])
