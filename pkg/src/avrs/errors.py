class ValidationError(ValueError):
    """Malformed or non-stochastic problem data."""


class CapExceeded(RuntimeError):
    """An enumeration would exceed its configured size cap."""


class InfeasibleTarget(ValueError):
    """The requested distortion lies below what any estimator can reach."""
