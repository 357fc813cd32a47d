"""Exception hierarchy.

Argument-type problems subclass ``ValueError`` so that callers (and the CLI,
which maps them to exit code 2) can treat them uniformly; numerical failures
subclass ``ArithmeticError`` (exit code 3).
"""


class MTLabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(MTLabError, ValueError):
    pass


class MeshMismatchError(InvalidArgumentError):
    pass


class InvalidWeightError(InvalidArgumentError):
    """The weight psi has (numerically) zero integral."""


class IncompatibilityError(InvalidArgumentError):
    """Right-hand side of a Poisson problem does not integrate to zero."""


class DegenerateInputError(InvalidArgumentError):
    pass


class InvalidPointError(InvalidArgumentError):
    """Point lies in the zero set of h."""


class ScaleError(InvalidArgumentError):
    """Requested length scale does not fit inside the normal chart."""


class EmptyDomainError(InvalidArgumentError):
    pass


class NumericError(MTLabError, ArithmeticError):
    pass


class FitError(NumericError):
    pass


class ExpansionInvalidError(FitError):
    pass


class StagnationError(NumericError):
    """Line search failed; ``best`` carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ParseError(InvalidArgumentError):
    """Malformed expression; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class DomainError(InvalidArgumentError):
    """Expression evaluates to a non-finite value at some node."""
