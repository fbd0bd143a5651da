"""ymflow: desk-scale numerics for equivariant Yang-Mills heat-flow blow-up."""

__version__ = "0.1.0"

from .model import ModelParams, derive_params, gamma_of_d
from .grid import RadialGrid, GridFunction, build_grid, weighted_inner, cutoff

__all__ = [
    "ModelParams", "derive_params", "gamma_of_d",
    "RadialGrid", "GridFunction", "build_grid", "weighted_inner", "cutoff",
    "__version__",
]
