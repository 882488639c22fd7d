"""Exception hierarchy shared by every cwgp module."""


class CwgpError(Exception):
    """Base class for all library errors."""


class DomainError(CwgpError, ValueError):
    """A value lies outside the domain of a warping (e.g. log of a non-positive number).

    ``index`` is the offending position when the failure happened on an array.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DimensionMismatch(CwgpError, ValueError):
    pass


class InvalidParameter(CwgpError, ValueError):
    pass


class InvalidOrder(InvalidParameter):
    pass


class UnsupportedVariant(CwgpError, ValueError):
    pass


class FactorizationFailed(CwgpError, ArithmeticError):
    pass


class NoClosedFormInverse(CwgpError):
    pass


class NoConvergence(CwgpError, ArithmeticError):
    """Numeric inversion did not reach tolerance; ``bracket`` holds the last (lo, hi)."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class NonFiniteObjective(CwgpError, ArithmeticError):
    pass


class OptimizerFailure(CwgpError):
    pass


class AllStartsFailed(OptimizerFailure):
    pass


class EmptyInput(CwgpError, ValueError):
    pass


class DataError(CwgpError):
    """Base class for dataset problems (CLI exit code 3)."""


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumn(DataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing column"


class InvalidSpec(DataError, ValueError):
    pass
