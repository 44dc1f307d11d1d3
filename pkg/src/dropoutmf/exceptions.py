"""Exception hierarchy shared by every module of the package."""


class DropoutMFError(Exception):
    """Base class for all package errors."""


class ShapeError(DropoutMFError, ValueError):
    """Operands have incompatible dimensions."""


class ParameterError(DropoutMFError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class BoundaryError(ParameterError):
    """A parameter sits exactly on an excluded boundary (e.g. theta == 1)."""


class CapacityError(DropoutMFError, ValueError):
    """The request exceeds an enumeration or memory bound."""


class ConvergenceError(DropoutMFError, RuntimeError):
    """An iterative routine hit its iteration cap."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class DivergenceError(DropoutMFError, ArithmeticError):
    """A training trace became non-finite or exceeded the divergence guard."""

    def __init__(self, message, iteration=None, value=None):
        super().__init__(message)
        self.iteration = iteration
        self.value = value
