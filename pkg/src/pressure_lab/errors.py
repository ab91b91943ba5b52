"""Typed exceptions shared across the package.

Every failure mode that callers are expected to branch on gets its own
class.  The CLI maps these onto process exit codes (validation -> 2,
numeric/convergence -> 3, parse -> 4).
"""


class PressureLabError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PressureLabError):
    """A point lies outside the map's interval of definition."""


class UndefinedDerivativeError(PressureLabError):
    """Derivative requested at a breakpoint of a piecewise-linear map."""


class ValidationError(PressureLabError):
    """Construction-time data fails a structural requirement."""


class ToleranceError(PressureLabError):
    """A root solve could not meet the requested tolerance."""


class SizeError(PressureLabError):
    """Input exceeds a hard combinatorial size limit."""


class InternalInvariantError(PressureLabError):
    """A property that should hold by construction was violated.

    Raised by self-checks; indicates an implementation bug or a model
    outside the class the guarantee was derived for.
    """


class ClassAError(PressureLabError):
    """The map lacks the smooth critical structure the operation needs."""


class InvariantError(PressureLabError):
    """Computed coefficients violate a required sign or range condition."""


class AlphaRecursionError(PressureLabError):
    """The singular-weight recursion met an inconsistent orbit graph."""


class BasePointError(PressureLabError):
    """Tree-pressure base point is too close to a singular orbit."""


class DepthError(PressureLabError):
    """Requested preimage-tree depth exceeds the supported maximum."""


class PoleOnGridError(PressureLabError):
    """A collocation weight is non-finite at a required evaluation point."""


class IterationError(PressureLabError):
    """Power iteration failed to reach the residual target."""


class NoGapError(PressureLabError):
    """Spectral gap too small for the requested spectral construction."""


class InconsistentVerdictError(PressureLabError):
    """Kink detection and the orbit-based criterion disagree."""


class ParseError(PressureLabError):
    """Expression source rejected at a specific byte offset.

    ``offset`` is the position of the offending token and ``expected``
    the set of token descriptions that would have been accepted there.
    """

    def __init__(self, message: str, offset: int, expected=()):
        super().__init__(message)
        self.offset = int(offset)
        self.expected = frozenset(expected)


class EvaluationError(PressureLabError):
    """Expression evaluation left the real domain (x/0, log of x <= 0)."""
