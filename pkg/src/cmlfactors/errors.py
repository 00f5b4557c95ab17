"""Exception types shared across the package."""


class CMLError(Exception):
    """Base class for all package errors."""


class ParameterError(CMLError, ValueError):
    """A parameter is outside its admissible range."""


class DomainError(CMLError, ValueError):
    """An argument lies outside the domain of a function."""


class DimensionError(CMLError, ValueError):
    """Array shapes do not agree."""


class DegenerateInputError(CMLError, ValueError):
    """Input carries no usable variation (zero variance, rank deficiency)."""


class NumericalError(CMLError, ArithmeticError):
    """A numerical routine failed to deliver the expected structure."""


class DivergenceError(CMLError, ArithmeticError):
    """The coupled system produced a non-finite or out-of-range state."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index
