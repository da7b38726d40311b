"""Study configuration: flat ``key = value`` text files.

Example::

    # additive noise study
    grid.L = 1.0
    grid.Nx = 32
    noise.kind = additive
    noise.sigma = auto          # 0.05 * i^-2
    scheme.n_list = 4, 8, 16, 32, 64

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Unknown keys are errors so that typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grid import Field, Grid, make_grid
from .noise import KINDS, NoiseModel, default_sigma, make_noise

__all__ = ["StudyConfig", "load_config", "parse_config", "DEFAULT_TEXT", "config_hash", "initial_field"]


@dataclasses.dataclass(frozen=True)
class StudyConfig:
    L: float = 1.0
    h: float = 1.0
    Nx: int = 32
    Nz: int = 16
    kind: str = "additive"
    m_W: int = 16
    sigma: tuple | None = None        # None: 0.05 * i^-2
    T: float = 0.5
    eps: float = 0.0
    n_list: tuple = (4, 8, 16, 32, 64)
    micro_steps: int = 8
    n_ref_factor: int = 16
    ref_micro_steps: int = 2
    paths: int = 32
    seed: int = 20240601
    M: float | None = None            # None: chosen from the data
    N: float | None = None
    l_fn: str = "log"
    init: str = "broadband"
    init_amplitude: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"noise.kind must be one of {KINDS}, got {self.kind!r}")
        nl = tuple(int(n) for n in self.n_list)
        if not nl or any(n < 1 for n in nl) or any(b <= a for a, b in zip(nl, nl[1:])):
            raise ConfigurationError(f"scheme.n_list must be strictly increasing positive integers, got {self.n_list}")
        object.__setattr__(self, "n_list", nl)
        if self.sigma is not None:
            object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))
            if len(self.sigma) != self.m_W:
                raise ConfigurationError(f"noise.sigma has {len(self.sigma)} entries, noise.m_W is {self.m_W}")
        for name in ("micro_steps", "n_ref_factor", "ref_micro_steps", "paths"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if not (0.0 <= self.eps < 1.0):
            raise ConfigurationError(f"scheme.eps must lie in [0, 1), got {self.eps}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigurationError("scheme.T must be positive")
        if self.init not in INIT_KINDS:
            raise ConfigurationError(f"init.kind must be one of {INIT_KINDS}, got {self.init!r}")
        for name in ("M", "N"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ConfigurationError(f"study.{name} must be positive")

    @property
    def n_ref(self) -> int:
        return self.n_ref_factor * max(self.n_list)

    @property
    def n_fine(self) -> int:
        return self.n_ref * self.ref_micro_steps

    def sigma_values(self) -> np.ndarray:
        return default_sigma(self.m_W) if self.sigma is None else np.asarray(self.sigma)

    def grid(self) -> Grid:
        return make_grid(self.L, self.h, self.Nx, self.Nz)

    def noise(self, grid: Grid | None = None) -> NoiseModel:
        return make_noise(self.kind, self.m_W, self.sigma_values(), grid or self.grid(), {})

    def v0(self, grid: Grid | None = None) -> Field:
        return initial_field(grid or self.grid(), self.init, self.init_amplitude)

    def replace(self, **changes) -> "StudyConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["n_list"] = list(self.n_list)
        d["sigma"] = None if self.sigma is None else list(self.sigma)
        return d


INIT_KINDS = ("broadband", "lowmode", "zero")


def initial_field(grid: Grid, kind: str = "broadband", amplitude: float = 0.1) -> Field:
    """Deterministic initial velocity.

    ``broadband``: c[k, m] = a (-1)^(k+m) lambda_11 / lambda_km on every mode
    with m >= 1. Coefficients decay like 1/lambda, the borderline of V: ||v0||
    grows only logarithmically with the truncation.
    ``lowmode``: c[k, m] = a (-1)^(k+m) / (k^2 + m^2)^(3/2) for 1 <= k, m <= 4.
    """
    c = np.zeros(grid.shape)
    if kind == "broadband":
        lam = grid.eigenvalues
        k = np.arange(1, grid.Nx + 1)[:, None]
        m = np.arange(1, grid.Nz + 1)[None, :]
        c[:, 1:] = amplitude * (-1.0) ** (k + m) * lam[0, 1] / lam[:, 1:]
    elif kind == "lowmode":
        for k in range(1, min(4, grid.Nx) + 1):
            for m in range(1, min(4, grid.Nz) + 1):
                c[k - 1, m] = amplitude * (-1) ** (k + m) / (k * k + m * m) ** 1.5
    elif kind != "zero":
        raise ConfigurationError(f"unknown initial field {kind!r}")
    return Field(grid, c)


# key -> (attribute, parser)
def _int(s):
    try:
        f = float(s)
    except ValueError:
        raise ConfigurationError(f"expected an integer, got {s!r}") from None
    if not f.is_integer():
        raise ConfigurationError(f"expected an integer, got {s!r}")
    return int(f)


def _float(s):
    try:
        return float(s)
    except ValueError:
        raise ConfigurationError(f"expected a number, got {s!r}") from None


def _opt_float(s):
    return None if s.lower() in ("auto", "none") else _float(s)


def _int_list(s):
    return tuple(_int(p) for p in s.split(",") if p.strip())


def _sigma(s):
    if s.lower() in ("auto", "default", "none"):
        return None
    return tuple(_float(p) for p in s.split(",") if p.strip())


_KEYS = {
    "grid.L": ("L", _float),
    "grid.h": ("h", _float),
    "grid.Nx": ("Nx", _int),
    "grid.Nz": ("Nz", _int),
    "noise.kind": ("kind", str),
    "noise.m_W": ("m_W", _int),
    "noise.sigma": ("sigma", _sigma),
    "scheme.T": ("T", _float),
    "scheme.eps": ("eps", _float),
    "scheme.n_list": ("n_list", _int_list),
    "scheme.micro_steps": ("micro_steps", _int),
    "ref.n_ref_factor": ("n_ref_factor", _int),
    "ref.micro_steps": ("ref_micro_steps", _int),
    "study.paths": ("paths", _int),
    "study.seed": ("seed", _int),
    "study.M": ("M", _opt_float),
    "study.N": ("N", _opt_float),
    "study.l_fn": ("l_fn", str),
    "init.kind": ("init", str),
    "init.amplitude": ("init_amplitude", _float),
}

DEFAULT_TEXT = """\
# default convergence study
grid.L = 1.0
grid.h = 1.0
grid.Nx = 32
grid.Nz = 16
noise.kind = additive
noise.m_W = 16
noise.sigma = auto
scheme.T = 0.5
scheme.eps = 0.0
scheme.n_list = 4, 8, 16, 32, 64
scheme.micro_steps = 8
ref.n_ref_factor = 16
ref.micro_steps = 2
study.paths = 32
study.seed = 20240601
study.M = auto
study.N = auto
study.l_fn = log
init.kind = broadband
init.amplitude = 0.1
"""


def parse_config(text: str, base: StudyConfig | None = None) -> StudyConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        attr, conv = _KEYS[key]
        values[attr] = conv(val)
    base = base or StudyConfig()
    try:
        return base.replace(**values)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def load_config(source: str) -> StudyConfig:
    """``source`` is a file path or the name ``default``."""
    if source == "default":
        return parse_config(DEFAULT_TEXT)
    p = Path(source)
    if not p.is_file():
        raise ConfigurationError(f"config file {source!r} not found")
    return parse_config(p.read_text())


def config_hash(cfg: StudyConfig) -> str:
    """Git blob hash of the canonical JSON form of the resolved config."""
    body = json.dumps(cfg.as_dict(), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()
