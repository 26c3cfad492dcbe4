"""Numerical light cones for the Fibonacci XY chain via free-fermion reduction."""

from .errors import BoundaryReached, DomainError, FibxyError, NumericFailure, ResourceError
from .potential import PotentialSpec, generate

__version__ = "0.1.0"

__all__ = ["PotentialSpec", "generate", "FibxyError", "DomainError", "ResourceError",
           "NumericFailure", "BoundaryReached", "__version__"]
