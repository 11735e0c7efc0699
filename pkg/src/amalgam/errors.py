"""Exception and warning types shared across the package."""


class AmalgamError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(AmalgamError, ValueError):
    """Operands have incompatible matrix dimensions."""


class SingularMatrixError(AmalgamError, ArithmeticError):
    """A matrix inversion hit a pivot below the singularity threshold."""


class NotInSubalgebraError(AmalgamError, ValueError):
    """An element expected to lie in the subalgebra does not."""


class NotInvertibleError(AmalgamError, ArithmeticError):
    """An element of the subalgebra is not invertible within it."""


class ExpectationNotInvertibleError(NotInvertibleError):
    """The conditional expectation of the fixed element is not invertible,
    so the S-transform machinery does not apply."""


class OutOfDomainError(AmalgamError, ValueError):
    """Argument lies outside the evaluation domain of a transform."""


class OutOfCertifiedDomainError(OutOfDomainError):
    """Argument lies outside the ball on which the transform is certified."""


class NoConvergenceError(AmalgamError, RuntimeError):
    """Fixed-point iteration exhausted its budget without converging.

    Carries the partial iteration report in ``report`` when available.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConsistencyError(AmalgamError, ArithmeticError):
    """Two computation paths that must agree did not."""


class OrderExceededError(AmalgamError, ValueError):
    """Requested order exceeds the truncation order of the data."""


class TooLargeError(AmalgamError, ValueError):
    """Requested size exceeds the combinatorial guard."""


class BadCompositionError(AmalgamError, ValueError):
    """Parts do not form a composition of the requested integer."""


class ShapeMismatchError(AmalgamError, ValueError):
    """Tensor shapes of two distributions are incompatible."""


class OutOfCertifiedDomainWarning(UserWarning):
    """Iteration attempted outside the certified ball; results are
    best-effort and the report is stamped accordingly."""


class NoncommutativeSubalgebraWarning(UserWarning):
    """S-transform evaluated over a noncommutative subalgebra, where the
    multiplicativity guarantees do not apply."""
