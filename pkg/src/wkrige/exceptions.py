"""Exception types raised by wkrige."""


class WkrigeError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(WkrigeError, ValueError):
    """Invalid input: bad shapes, mismatched grids, violated preconditions."""


class NumericalError(WkrigeError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy answer."""


class IllConditionedError(NumericalError):
    """The bordered Kriging matrix is singular or nearly so."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap."""
