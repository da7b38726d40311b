"""Splitting-up solver for 2D stochastic primitive equations.

The velocity lives in a sine-cosine Galerkin space on [0, L] x [-h, 0]. Each
mesh interval runs a deterministic primitive-equation substep followed by a
linear stochastic substep, and :mod:`pesplit.experiment` measures the
strong error against a fine unsplit reference on the same Brownian path.
"""

from .config import StudyConfig, load_config, parse_config
from .errors import (BlowUpError, ConfigurationError, ConstraintError, CouplingError, DomainError, PesplitError,
                     ShapeError, StabilityError, StatisticsError)
from .experiment import certify_hypotheses, convergence_study, error_e_n
from .grid import DzField, Field, Grid, ThetaField, eval_field, make_grid, norms
from .kernels import BACKEND
from .noise import NoiseModel, coarsen, make_noise, sample_path
from .operators import EpsilonSplit, apply_A, nonlinear_B, phi, project_H, trilinear_b
from .reference import ReferenceConfig, run_reference
from .splitting import SplitConfig, compute_Z, deterministic_step, run_splitting, stochastic_step

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "StudyConfig", "load_config", "parse_config",
    "PesplitError", "ConfigurationError", "DomainError", "ShapeError", "ConstraintError", "BlowUpError",
    "CouplingError", "StatisticsError", "StabilityError",
    "Grid", "Field", "ThetaField", "DzField", "make_grid", "eval_field", "norms",
    "EpsilonSplit", "project_H", "apply_A", "phi", "nonlinear_B", "trilinear_b",
    "NoiseModel", "make_noise", "sample_path", "coarsen",
    "SplitConfig", "deterministic_step", "stochastic_step", "run_splitting", "compute_Z",
    "ReferenceConfig", "run_reference",
    "error_e_n", "convergence_study", "certify_hypotheses",
]
