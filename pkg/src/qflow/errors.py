"""Exception hierarchy shared by every qflow module."""


class QflowError(Exception):
    pass


class DomainError(QflowError, ValueError):
    """Argument outside the admissible range (index, order, exponent)."""


class PositivityError(DomainError):
    """A curvature or radius vector left the positive cone."""


class ConstructionError(QflowError):
    pass


class ConvexityLossError(QflowError):
    """Principal radii dropped to (or below) the convexity margin.

    ``node`` is the offending grid index, ``margin`` the smallest radius seen.
    """

    def __init__(self, message, node=None, margin=None):
        super().__init__(message)
        self.node = node
        self.margin = margin


class NumericalError(QflowError):
    """An iterative solver did not converge; ``best`` holds the best-so-far values."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class StepFailure(QflowError):
    """Step retries exhausted. Carries the last accepted state and the final cause."""

    def __init__(self, message, state=None, cause=None):
        super().__init__(message)
        self.state = state
        self.cause = cause


class InsufficientDataError(QflowError):
    pass


class ConfigError(QflowError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
