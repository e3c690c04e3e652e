"""Exception hierarchy shared by all solvers."""


class EEOptError(Exception):
    """Base class for every error raised by :mod:`eeopt`."""


class DomainError(EEOptError, ValueError):
    """An argument lies outside the domain of a function or model."""


class BracketError(EEOptError, ValueError):
    """A root bracket does not enclose a sign change."""


class InfeasibleError(EEOptError):
    """The constraint set of an optimization problem is empty."""


class NumericalError(EEOptError, ArithmeticError):
    """A numerical routine failed to reach its requested accuracy."""


class QuadratureError(NumericalError):
    """Adaptive quadrature ran out of subdivisions.

    The best available estimate and its error bound are kept on the
    exception so callers can decide whether it is good enough.
    """

    def __init__(self, message, estimate=float("nan"), error_bound=float("inf")):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


class ConvergenceError(NumericalError):
    """An iterative method stopped before meeting its tolerance."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class TableRangeError(EEOptError, ValueError):
    """A lookup fell outside the sampled range of an MMSE table."""
