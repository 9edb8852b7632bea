"""Exception types raised by the package."""


class PrutfError(Exception):
    """Base class for all package errors."""


class SignalTooShortError(PrutfError, ValueError):
    """The signal has fewer than ``r + 2`` samples."""


class DimensionError(PrutfError, ValueError):
    pass


class NonFiniteError(PrutfError, ValueError):
    pass


class GramFactorError(PrutfError, ArithmeticError):
    """Banded Cholesky factorization of the difference Gram matrix failed.

    This indicates either an invalid boundary set or a problem too badly
    conditioned for double precision (large ``n`` combined with large ``r``).
    """


class CapExceededError(PrutfError, RuntimeError):
    """The path ran for more events than the configured cap."""


class DegenerateScaleError(PrutfError, ValueError):
    """The robust noise scale estimate is zero; pass ``sigma`` explicitly."""


class UnderdeterminedSegmentError(PrutfError, ValueError):
    pass


class LambdaOutOfRangeError(PrutfError, ValueError):
    pass
