"""Exception types shared across the package."""


class ArgumentError(ValueError):
    """An operation was called outside its domain (reversed interval, negative length, ...)."""


class NumericError(ArithmeticError):
    """A numerical evaluation failed to reach its tolerance or produced non-finite values."""

    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate
