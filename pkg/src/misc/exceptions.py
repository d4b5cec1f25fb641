"""
Error types shared across the package. The command line maps them onto exit codes:
2 for input errors, 3 for numeric aborts.
"""


class ChoquardError(Exception):
    """base class of every error raised on purpose by this package"""


class InvalidConfigError(ChoquardError, ValueError):
    pass


class GridMismatchError(ChoquardError, ValueError):
    pass


class FieldFormatError(ChoquardError, ValueError):
    pass


class SizeGuardError(ChoquardError, ValueError):
    pass


class HermitianSymmetryError(ChoquardError, ValueError):
    pass


class NonNormalizableError(ChoquardError, ValueError):
    pass


class SolverAbortError(ChoquardError, RuntimeError):
    """
    Raised when an iterate stops being finite. The last finite iterate and the
    histories gathered so far travel with the exception for the state dump.
    """

    def __init__(self, message, iteration=0, last_field=None, histories=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_field = last_field
        self.histories = histories or {}


class NonFiniteValueError(ChoquardError, ValueError):
    """a sample, coefficient or multiplier that has to be finite is not"""


class ZeroFieldError(ChoquardError, ValueError):
    """the operation is undefined on the zero field"""


class ConstraintError(ChoquardError, ValueError):
    """a field that must satisfy D(u) = 1 does not"""


class EmptyHistoryError(ChoquardError, ValueError):
    pass
