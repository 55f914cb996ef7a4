"""Exception types raised across the package."""


class CSCError(Exception):
    """Base class for package errors."""


class InvalidInputError(CSCError, ValueError):
    """Input contains NaN/Inf or violates a precondition."""


class DimensionError(CSCError, ValueError):
    """Array shapes are inconsistent."""


class ConjugateSymmetryError(CSCError, ValueError):
    """A spectrum does not correspond to a real signal."""


class NumericalError(CSCError, RuntimeError):
    """A solver produced NaN or diverged."""

    def __init__(self, msg, iteration=None, partial=None):
        super().__init__(msg)
        self.iteration = iteration
        # Trace collected before the failure, when the raiser has one.
        self.partial = partial
