"""Exception types shared across the package.

Validation problems (bad input, violated invariants) derive from ``ValueError``;
numerical breakdowns (overflow, non-convergence) derive from ``NumericalError``.
The CLI maps the first family to exit code 1 and the second to exit code 2.
"""


class NumericalError(ArithmeticError):
    """A computation could not be carried out to the requested accuracy."""


class MatrixOverflowError(NumericalError, OverflowError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, *, iterations=None, step_norm=None):
        super().__init__(message)
        self.iterations = iterations
        self.step_norm = step_norm


class NotSymmetricError(ValueError):
    pass


class NotSPDError(ValueError):
    pass


class NotRotationError(ValueError):
    pass


class DispersionError(ValueError):
    """Samples too spread out for a (locally unique) Karcher mean."""
