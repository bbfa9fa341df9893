"""Smooth-max regularization of convex polytopes with recursive
spherical maps, curvature-deficit fields, and a verification harness."""

__version__ = "0.1.0"

from .eta import EtaKernel, eta_jet
from .kernels import backend_name
from .polytope import LinearFunctional, Polytope
from .smoothing import SmoothField, SmoothingSchedule

__all__ = [
    "EtaKernel",
    "LinearFunctional",
    "Polytope",
    "SmoothField",
    "SmoothingSchedule",
    "backend_name",
    "eta_jet",
    "__version__",
]
