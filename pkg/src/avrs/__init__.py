"""Adversarial remote-source rate-distortion bounds and a type-based coding simulator."""
from .errors import CapExceeded, InfeasibleTarget, ValidationError
from .instance import ProblemInstance, load_instance, save_instance

__version__ = "0.1.0"

__all__ = [
    "CapExceeded",
    "InfeasibleTarget",
    "ProblemInstance",
    "ValidationError",
    "load_instance",
    "save_instance",
    "__version__",
]
