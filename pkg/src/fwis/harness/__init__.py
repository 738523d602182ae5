"""Monte Carlo engine, validation suites, path export and the command line."""

from .io import export_paths, read_paths
from .mc import McConfig, McEstimate, collect, run_mc
from .rng import block_rng

__all__ = ["McConfig", "McEstimate", "block_rng", "collect", "export_paths", "read_paths", "run_mc"]
