"""Augmented Hodge projection for fluid / rigid-body interaction on MAC grids."""

from .field_ops import CoupledState, RigidBody
from .geometry import LevelSetDomain
from .grid import FaceField, MacGrid, build_grid
from .projection import Discretization, discretize, measure_consistency, project

__all__ = [
    "CoupledState",
    "Discretization",
    "FaceField",
    "LevelSetDomain",
    "MacGrid",
    "RigidBody",
    "build_grid",
    "discretize",
    "measure_consistency",
    "project",
]

__version__ = "0.1.0"
