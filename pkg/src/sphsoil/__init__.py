"""Plane-strain SPH for dry and fully submerged elastic soil."""

from sphsoil.errors import (
    DegenerateNeighborhoodError,
    InvalidArgumentError,
    ScenarioError,
    SimulationDivergedError,
    UnsupportedGeometryError,
)
from sphsoil.kernel import CubicSplineKernel, eval_grad_w, eval_w

__version__ = "0.1.0"

__all__ = [
    "CubicSplineKernel",
    "DegenerateNeighborhoodError",
    "InvalidArgumentError",
    "ScenarioError",
    "SimulationDivergedError",
    "UnsupportedGeometryError",
    "eval_grad_w",
    "eval_w",
]
