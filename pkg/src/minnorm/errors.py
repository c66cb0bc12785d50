"""Exception hierarchy shared by the estimators, harness and CLI."""


class MinnormError(Exception):
    """Base class for all package errors."""


class InputError(MinnormError, ValueError):
    """Malformed inputs: shapes, non-finite values, bad indices, bad config."""


class NumericalError(MinnormError):
    """A numerical routine could not deliver a certified result."""


class RankDeficientError(NumericalError):
    """A design block failed the full-rank check under the rank tolerance."""


class ConvergenceError(NumericalError):
    """An iterative solver stopped before meeting its optimality certificate."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class DecompositionError(NumericalError):
    """A model-averaging decomposition left a residual above tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
