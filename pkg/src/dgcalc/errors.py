"""Exception types raised by the library."""


class DGError(Exception):
    """Base class for library errors."""


class EvaluationError(DGError, ValueError):
    """A user callable produced non-finite values.

    Attributes
    ----------
    element : int or None
        Global label of the first offending element, when known.
    """

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class SingularSystemError(DGError, ArithmeticError):
    """A linear system could not be factorized."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class ConvergenceError(DGError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance.

    The iterate history is attached so callers can inspect what happened.
    """

    def __init__(self, message, history=None, iterate=None):
        super().__init__(message)
        self.history = list(history or [])
        self.iterate = iterate


class MonotonicityError(DGError, ValueError):
    """A sampled monotonicity certificate failed."""


class NonFiniteError(DGError, FloatingPointError):
    """A time integration produced NaN or infinite coefficients.

    Attributes
    ----------
    step : int
        Index of the step (starting at 1) whose result was not finite.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
