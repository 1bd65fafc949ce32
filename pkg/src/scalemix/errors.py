"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class NumericError(ArithmeticError):
    """A numerical routine failed (factorization, quadrature, ...)."""


class UnsupportedConfigurationError(NotImplementedError):
    """The requested configuration has no implementation."""


class FullyPruned(Exception):
    """Every hyperparameter has been driven to zero.

    This is a terminal state of the Type II iteration rather than an
    arithmetic failure; callers treat it as convergence to x = 0.
    """
