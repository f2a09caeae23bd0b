"""Exception types shared across the package."""


class DefcertError(Exception):
    """Base class for all errors raised by defcert."""


class ShapeError(DefcertError, ValueError):
    """Array or field dimensions do not agree."""


class ParameterError(DefcertError, ValueError):
    """A numeric parameter is outside its valid domain."""


class DataFormatError(DefcertError, ValueError):
    """A file on disk is malformed (bad magic, truncated, inconsistent)."""


class DivergenceError(DefcertError, ArithmeticError):
    """Training produced a non-finite loss, usually from too large a step size."""
