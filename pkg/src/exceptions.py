"""
Error types raised by the hyperbolic MTN modules.
Each error derives from the built-in exception that best describes the failure, so callers
that only catch ValueError/KeyError/RuntimeError keep working.

Dependencies:
- none
"""


class HyperbolicMTNError(Exception):
    """Base class for all errors raised inside the package."""


class AlphabetError(HyperbolicMTNError, KeyError):
    pass


class SpectralError(HyperbolicMTNError, ValueError):
    pass


class GeometryError(HyperbolicMTNError, ValueError):
    pass


class LegStateError(HyperbolicMTNError, ValueError):
    pass


class ContractionSingularityError(HyperbolicMTNError, ArithmeticError):
    """
    Raised when a Grassmann contraction has a vanishing denominator.
    :param location: optional description of the tile/edge where it happened
    """
    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)


class ConditioningError(HyperbolicMTNError, ArithmeticError):
    pass


class OracleSizeError(HyperbolicMTNError, ValueError):
    pass


class SymmetryError(HyperbolicMTNError, ValueError):
    pass


class OptimizationError(HyperbolicMTNError, RuntimeError):
    def __init__(self, message, trace=None):
        self.trace = trace or []
        super().__init__(message)


class FitError(HyperbolicMTNError, RuntimeError):
    pass


class ConstraintError(HyperbolicMTNError, ValueError):
    pass


class ConfigurationError(HyperbolicMTNError, ValueError):
    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class PurityError(HyperbolicMTNError, ValueError):
    pass


class DimensionError(HyperbolicMTNError, ValueError):
    pass


class DegenerateGroundStateError(HyperbolicMTNError, ValueError):
    pass
