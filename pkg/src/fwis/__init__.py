"""Fractional Wishart processes, eps-approximations for real index, and a
Wishart stochastic volatility model built on them."""

from .errors import ConeError, ContractError, GridError, NumericError
from .fbm import HurstParams, MatrixPath, PathBatch, TimeGrid
from .spde import GeneralVSpec, SixParamSpec, blend_coeffs, eps_fwis_general, riccati_transform
from .wishart import FwisSpec, eps_fwis_paths_int, fwis_laplace, fwis_paths

__version__ = "0.1.0"
