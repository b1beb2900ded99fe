"""Exception hierarchy shared by the solvers and the command-line driver."""


class GMSError(Exception):
    """Base class for all package errors."""

    code = 3


class ShapeError(GMSError, ValueError):
    """Operands have incompatible or malformed dimensions."""


class InvalidParameterError(GMSError, ValueError):
    """A scalar hyperparameter is outside its admissible range."""


class DataError(GMSError, ValueError):
    """Input data is non-finite or otherwise unusable."""


class FormatError(DataError):
    """A file on disk does not follow the expected binary/text layout."""


class UndefinedMetricError(GMSError, ValueError):
    """A metric was requested for an input where it is not defined."""


class DegenerateFilterError(GMSError, ValueError):
    """The filter has no nonzero singular values."""


class ConvergenceError(GMSError, RuntimeError):
    """Raised by strict drivers when the outer loop hits its iteration cap."""

    code = 4
