"""Exception types raised across the package."""


class MdwpeError(Exception):
    """Base class for package errors."""


class InvalidConfigError(MdwpeError, ValueError):
    pass


class InvalidInputError(MdwpeError, ValueError):
    pass


class NumericalFailureError(MdwpeError, ArithmeticError):
    """A linear system could not be solved, even with regularisation."""
