"""Exception hierarchy shared by every module."""


class AaptError(Exception):
    """Base class for all library errors."""


class DimensionError(AaptError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ValidationError(AaptError, ValueError):
    """An input violates a structural requirement (Hermiticity, unitarity, ...)."""


class DomainError(AaptError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class ConfigError(AaptError, ValueError):
    """An experiment or CLI configuration failed to parse or validate."""


class NumericalError(AaptError, ArithmeticError):
    """Base for failures that arise from the numerics rather than from bad input."""


class GenerationError(NumericalError):
    """Random generation did not produce an admissible object."""


class CompletenessError(NumericalError):
    """A measurement parameterization is not informationally complete."""


class DegenerateInputError(NumericalError):
    """The input state does not have full Schmidt number."""


class DegenerateEstimateError(NumericalError):
    """The intermediate estimate cannot be normalized (e.g. singular trace map)."""


class FitError(NumericalError):
    """A regression could not be carried out on the supplied data."""
