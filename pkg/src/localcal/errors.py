"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class ParseError(ValueError):
    """An input file could not be parsed; message names the row/column."""


class ValidationError(ValueError):
    """Input data parsed but violates a data invariant (simplex, finiteness, ids)."""


class NumericalError(ArithmeticError):
    """An optimizer produced a non-finite objective."""


class UndefinedCorrelationError(ValueError):
    """Correlation requested on data with zero variance."""
