"""Exception hierarchy shared by every uavfml module."""


class UAVFMLError(Exception):
    """Base class for all package errors."""


class ConfigError(UAVFMLError, ValueError):
    """Raised for malformed or invalid scenario configuration."""


class Infeasible(UAVFMLError):
    """No point satisfies the constraints; ``constraint`` names the culprit."""

    def __init__(self, constraint, message=None):
        self.constraint = constraint
        super().__init__(message or f"infeasible: {constraint}")


class MaxIterReached(UAVFMLError):
    """Iterative solver hit its iteration cap before converging."""


class InvalidState(UAVFMLError, ValueError):
    """A linearization point has a non-positive denominator."""


class ModelError(UAVFMLError, ArithmeticError):
    """Physical model evaluated outside its domain (e.g. zero rate with payload)."""


class ShapeMismatch(UAVFMLError, ValueError):
    pass


class EmptyModality(UAVFMLError, ValueError):
    pass


class MalformedRow(UAVFMLError, ValueError):
    def __init__(self, line, message=None):
        self.line = line
        super().__init__(message or f"malformed row at line {line}")


class UnknownColumn(UAVFMLError, KeyError):
    pass


class DegenerateSnapshot(UAVFMLError, ValueError):
    pass
