"""Truncated cylindrical Wiener noise and the built-in diffusion operators.

Every built-in family has the form

    psi(t, v) r_i = sigma_i * (a + b <v, e_i>) e_i,    i = 1..m_W

with unit-norm, mutually orthogonal shapes e_i:

* ``additive``                  a = 1, b = 0, e_i a single basis mode
* ``diagonal-multiplicative``   a = 0, b = 1, e_i a single basis mode, so
                                <v, e_i> e_i is the projection onto that mode
* ``low-mode-multiplicative``   a = 0, b = 1, e_i the normalised sum of two
                                modes sharing the same vertical index

None of them involves gradients of v, so every constant multiplying eps in
the growth and Lipschitz bounds is zero.

Brownian increments are generated counter-style: the value for (seed, mode,
interval) is a fixed function of those three integers, so paths do not depend
on how work is scheduled.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError, ShapeError
from .grid import Field, Grid

__all__ = [
    "KINDS",
    "NoiseModel",
    "BrownianPath",
    "PathProvenance",
    "make_noise",
    "default_sigma",
    "sample_path",
    "coarsen",
    "apply_psi_increment",
    "psi_columns",
    "hs_norms",
    "estimate_constants",
    "CONSTANT_NAMES",
]

KINDS = ("additive", "diagonal-multiplicative", "low-mode-multiplicative")
CONSTANT_NAMES = ("K0", "K1", "K2", "K3", "K4", "L0", "L1", "L2", "R0", "R1", "R2")


@dataclasses.dataclass(frozen=True, eq=False)
class NoiseModel:
    kind: str
    grid: Grid
    sigma: np.ndarray          # (m_W,)
    shapes: np.ndarray         # (m_W, Nx, Nz+1) unit-norm coefficient arrays
    modes: tuple               # per channel, tuple of (k, m) pairs in its support
    add_amp: np.ndarray        # (m_W,) sigma_i * a
    mult_amp: np.ndarray       # (m_W,) sigma_i * b
    declared: dict
    eps_coupled: bool = False

    @property
    def m_W(self) -> int:
        return int(self.sigma.shape[0])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.sigma)


def default_sigma(m_W: int, amplitude: float = 0.05, decay: float = 2.0) -> np.ndarray:
    """sigma_i = amplitude * i**(-decay)."""
    return amplitude * np.arange(1, m_W + 1, dtype=np.float64) ** (-decay)


def _modes_by_eigenvalue(grid: Grid):
    lam = grid.eigenvalues
    cand = [(k, m) for k in range(1, grid.Nx + 1) for m in range(1, grid.Nz + 1)]
    return sorted(cand, key=lambda km: (lam[km[0] - 1, km[1]], km[0], km[1]))


def _pair_modes(grid: Grid):
    lam = grid.eigenvalues
    cand = [((2 * j - 1, m), (2 * j, m)) for j in range(1, grid.Nx // 2 + 1) for m in range(1, grid.Nz + 1)]
    return sorted(cand, key=lambda p: (lam[p[0][0] - 1, p[0][1]], p[0][0], p[0][1]))


def make_noise(kind: str, m_W: int, sigma, grid: Grid, params: dict | None = None) -> NoiseModel:
    """Build one of the built-in noise families.

    ``params`` may carry ``modes``: an explicit list of channel supports, each a
    (k, m) pair (single-mode families) or a pair of such pairs (low-mode family).
    By default channels are the admissible modes in increasing eigenvalue order.
    """
    params = dict(params or {})
    if kind not in KINDS:
        raise ConfigurationError(f"unknown noise kind {kind!r}; expected one of {KINDS}")
    sigma = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
    if sigma.ndim != 1 or sigma.size == 0:
        raise ConfigurationError("sigma must be a non-empty list")
    if int(m_W) != m_W or m_W < 1 or sigma.size != m_W:
        raise ConfigurationError(f"m_W={m_W} does not match {sigma.size} sigma values")
    if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
        raise ConfigurationError("sigma values must be finite and nonnegative")

    if kind == "low-mode-multiplicative":
        pool = params.get("modes") or _pair_modes(grid)
        supports = [tuple(tuple(km) for km in p) for p in pool[:m_W]]
    else:
        pool = params.get("modes") or _modes_by_eigenvalue(grid)
        supports = [(tuple(km),) for km in pool[:m_W]]
    if len(supports) < m_W:
        raise ConfigurationError(f"grid {grid.Nx}x{grid.Nz} cannot host {m_W} noise channels of kind {kind}")

    seen = set()
    shapes = np.zeros((m_W,) + grid.shape)
    for i, sup in enumerate(supports):
        for k, m in sup:
            if not (1 <= k <= grid.Nx and 1 <= m <= grid.Nz):
                raise ConfigurationError(f"noise mode ({k}, {m}) is not an admissible retained mode")
            if (k, m) in seen:
                raise ConfigurationError(f"noise mode ({k}, {m}) used twice; channels must be orthogonal")
            seen.add((k, m))
            shapes[i, k - 1, m] = 1.0 / math.sqrt(grid.weights[k - 1, m] * len(sup))
        if kind == "low-mode-multiplicative" and len({m for _, m in sup}) != 1:
            raise ConfigurationError("low-mode channels must combine modes with the same vertical index")

    if kind == "additive":
        add_amp, mult_amp = sigma.copy(), np.zeros_like(sigma)
    else:
        add_amp, mult_amp = np.zeros_like(sigma), sigma.copy()
    declared = _declared_constants(kind, grid, sigma, supports)
    for arr in (sigma, shapes, add_amp, mult_amp):
        arr.setflags(write=False)
    return NoiseModel(kind, grid, sigma, shapes, tuple(supports), add_amp, mult_amp, declared)


def _declared_constants(kind, grid, sigma, supports):
    lam = grid.eigenvalues
    mz = grid.mz
    c = dict.fromkeys(CONSTANT_NAMES, 0.0)
    s2 = sigma ** 2
    if kind == "additive":
        c["K0"] = float(s2.sum())
        c["L0"] = float(sum(s * np.mean([mz[m] ** 2 for _, m in sup]) for s, sup in zip(s2, supports)))
        c["R0"] = float(sum(s * np.mean([lam[k - 1, m] for k, m in sup]) for s, sup in zip(s2, supports)))
        return c
    smax = float(s2.max())
    c["K1"] = c["K3"] = c["L1"] = smax
    if kind == "diagonal-multiplicative":
        c["R1"] = smax
    else:
        # sup over the pair of (a + b)^2/2 * (la + lb)/2 / (la a^2 + lb b^2)
        ratios = []
        for s, ((ka, ma), (kb, mb)) in zip(s2, supports):
            la, lb = lam[ka - 1, ma], lam[kb - 1, mb]
            ratios.append(s * (la + lb) ** 2 / (4.0 * la * lb))
        c["R1"] = float(max(ratios))
    return c


def psi_columns(model: NoiseModel, c: np.ndarray) -> np.ndarray:
    """Coefficients of psi(v) r_i for every channel, shape (m_W, Nx, Nz+1)."""
    proj = np.tensordot(model.shapes, c * model.grid.weights, axes=([1, 2], [0, 1]))
    amp = model.add_amp + model.mult_amp * proj
    return amp[:, None, None] * model.shapes


def apply_psi_increment(model: NoiseModel, t: float, v: Field, dW) -> Field:
    """sum_i psi(t, v) r_i dW_i; the built-in families do not depend on t."""
    dW = np.asarray(dW, dtype=np.float64)
    if dW.shape != (model.m_W,):
        raise ShapeError(f"expected {model.m_W} Wiener increments, got shape {dW.shape}")
    if v.grid != model.grid:
        raise ShapeError("field and noise model live on different grids")
    return Field(v.grid, np.tensordot(dW, psi_columns(model, v.coeffs), axes=(0, 0)))


def hs_norms(model: NoiseModel, c: np.ndarray) -> dict:
    """Squared Hilbert-Schmidt norms of psi(v) into H, into V and of dz psi(v) into H."""
    g = model.grid
    cols = psi_columns(model, c)
    w = g.weights
    lam = g.eigenvalues
    mz2 = g.mz[None, :] ** 2
    c2w = cols ** 2 * w
    return {
        "H": float(c2w.sum()),
        "V": float((c2w * lam).sum()),
        "dzH": float((c2w * mz2).sum()),
    }


@dataclasses.dataclass(frozen=True)
class PathProvenance:
    """Identity of the fine path every coarsening descends from."""

    seed: int
    n_fine_root: int
    T: float
    m_W: int


@dataclasses.dataclass(frozen=True, eq=False)
class BrownianPath:
    increments: np.ndarray     # (m_W, n) Wiener increments
    T: float
    provenance: PathProvenance
    factor: int = 1            # fine intervals per interval of this path

    @property
    def n(self) -> int:
        return int(self.increments.shape[1])

    @property
    def n_fine(self) -> int:
        return self.n

    @property
    def m_W(self) -> int:
        return int(self.increments.shape[0])

    @property
    def dt(self) -> float:
        return self.T / self.n


_TWO53 = float(2 ** 53)


def _normals(seed: int, channel: int, count: int) -> np.ndarray:
    key = (seed & 0xFFFF_FFFF_FFFF_FFFF) | (channel << 64)
    raw = np.random.Philox(key=key).random_raw(count)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO53
    return ndtri(u)


def sample_path(model_or_mw, seed: int, n_fine: int, T: float) -> BrownianPath:
    """Draw increments dW[i, j] ~ N(0, T / n_fine), a pure function of (seed, i, j)."""
    m_W = model_or_mw.m_W if isinstance(model_or_mw, NoiseModel) else int(model_or_mw)
    if int(n_fine) != n_fine or n_fine < 1:
        raise ConfigurationError(f"n_fine must be a positive integer, got {n_fine}")
    if not T > 0:
        raise ConfigurationError(f"horizon must be positive, got {T}")
    if int(seed) != seed or seed < 0 or seed >= 2 ** 64:
        raise ConfigurationError("seed must be an integer in [0, 2**64)")
    seed, n_fine, T = int(seed), int(n_fine), float(T)
    scale = math.sqrt(T / n_fine)
    inc = np.empty((m_W, n_fine))
    for i in range(m_W):
        inc[i] = scale * _normals(seed, i, n_fine)
    inc.setflags(write=False)
    return BrownianPath(inc, T, PathProvenance(seed, n_fine, T, m_W))


def coarsen(path: BrownianPath, factor: int) -> BrownianPath:
    """Sum consecutive blocks of ``factor`` increments; no new randomness."""
    if int(factor) != factor or factor < 1 or path.n % int(factor):
        raise ConfigurationError(f"coarsening factor {factor} does not divide {path.n}")
    factor = int(factor)
    if factor == 1:
        return path
    inc = path.increments.reshape(path.m_W, path.n // factor, factor).sum(axis=2)
    inc.setflags(write=False)
    return BrownianPath(inc, path.T, path.provenance, path.factor * factor)


def _random_admissible(rng, grid, model, count):
    """Mix of broadband fields and fields concentrated on the noise channels."""
    lam = grid.eigenvalues
    out = []
    support = np.zeros(grid.shape, dtype=bool)
    for sup in model.modes:
        for k, m in sup:
            support[k - 1, m] = True
    for s in range(count):
        c = rng.standard_normal(grid.shape)
        if s % 3 == 0:
            c *= (1.0 + lam) ** (-rng.uniform(0.0, 2.0))
        elif s % 3 == 1:
            c *= support * rng.uniform(0.0, 1.0, size=grid.shape) ** 4
        else:
            # one dominant mode plus a small broadband tail
            pick = np.zeros(grid.shape)
            pick[rng.integers(0, grid.Nx), rng.integers(1, grid.Nz + 1)] = 1.0
            c = pick + 1e-3 * c
        c[:, 0] = 0.0
        if not np.any(c):
            c[0, 1] = 1.0
        out.append(c)
    return out


def estimate_constants(model: NoiseModel, grid: Grid | None = None, samples: int = 200, seed: int = 0) -> dict:
    """Empirical growth/Lipschitz constants from random admissible fields.

    Constants are fitted in order (offset, then |.|-coefficient, then the
    eps-graded coefficient) as the smallest nonnegative values that dominate
    every sample. Returns ``{"estimated": {...}, "declared": {...}, "samples": n}``.
    """
    grid = grid or model.grid
    if grid != model.grid:
        raise ShapeError("grid does not match the noise model")
    if samples < 10:
        raise ConfigurationError("estimate_constants needs at least 10 samples")
    rng = np.random.default_rng(seed)
    w, lam, mz2 = grid.weights, grid.eigenvalues, grid.mz[None, :] ** 2
    zero = np.zeros(grid.shape)
    base = hs_norms(model, zero)

    def sq(c, mult=1.0):
        return float((c ** 2 * w * mult).sum())

    fields = _random_admissible(rng, grid, model, samples)
    rows = []
    for c in fields:
        hs = hs_norms(model, c)
        rows.append((hs, sq(c), sq(c, lam), sq(c, mz2), sq(c, mz2 * lam), sq(c, lam ** 2)))

    def envelope(values, offset, first, second):
        values = np.asarray(values)
        first, second = np.asarray(first), np.asarray(second)
        a = max(0.0, float(np.max((values - offset) / first)))
        resid = values - offset - a * first
        b = max(0.0, float(np.max(resid / second)))
        return a, b

    est = {}
    est["K0"], est["L0"], est["R0"] = base["H"], base["dzH"], base["V"]
    hs_h = [r[0]["H"] for r in rows]
    hs_dz = [r[0]["dzH"] for r in rows]
    hs_v = [r[0]["V"] for r in rows]
    est["K1"], est["K2"] = envelope(hs_h, base["H"], [r[1] for r in rows], [r[2] for r in rows])
    est["L1"], est["L2"] = envelope(hs_dz, base["dzH"], [r[3] for r in rows], [r[4] for r in rows])
    est["R1"], est["R2"] = envelope(hs_v, base["V"], [r[2] for r in rows], [r[5] for r in rows])

    # Lipschitz pairs: psi is affine, so only the difference matters, but we
    # evaluate both ends to keep the check honest for general models.
    diffs, n1, n2 = [], [], []
    others = _random_admissible(rng, grid, model, samples)
    for c1, c2 in zip(fields, others):
        d_cols = psi_columns(model, c1) - psi_columns(model, c2)
        diffs.append(float((d_cols ** 2 * w).sum()))
        dc = c1 - c2
        n1.append(sq(dc))
        n2.append(sq(dc, lam))
    est["K3"], est["K4"] = envelope(diffs, 0.0, n1, n2)
    return {"estimated": est, "declared": dict(model.declared), "samples": samples, "kind": model.kind}
