"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition or invariant."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces non-finite values (NaN/Inf guard)."""
