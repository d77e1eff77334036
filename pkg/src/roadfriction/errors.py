"""Exception hierarchy shared by all modules."""


class RoadFrictionError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(RoadFrictionError, ValueError):
    """Invalid or infeasible configuration."""


class ParseError(RoadFrictionError, ValueError):
    """Malformed input file. ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDatasetError(RoadFrictionError):
    """No records survived loading or filtering."""


class ContractError(RoadFrictionError, ValueError):
    """Arguments violate a documented precondition (shape, state, ...)."""


class EmptyWindowError(RoadFrictionError):
    """Every slot of a structured window was missing."""


class DegenerateLabelsError(RoadFrictionError, ValueError):
    """Training labels contain a single class."""


class ConvergenceError(RoadFrictionError):
    """An iterative solver stopped without converging.

    ``best`` carries the best iterate reached, when one exists.
    """

    def __init__(self, message, best=None, iteration=None):
        self.best = best
        self.iteration = iteration
        super().__init__(message)


class NonFiniteError(RoadFrictionError, FloatingPointError):
    """A cost or update became NaN/inf. ``iteration`` is where it happened."""

    def __init__(self, message, iteration=None, last_finite=None):
        self.iteration = iteration
        self.last_finite = last_finite
        super().__init__(message)


class InsufficientDataError(RoadFrictionError, ValueError):
    """Too few samples for the requested operation."""


class DomainError(RoadFrictionError, ValueError):
    """Input outside the mathematical domain of a function."""
