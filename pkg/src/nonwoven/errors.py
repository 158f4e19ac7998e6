"""Exception hierarchy shared by all pipelines.

The CLI maps any :class:`NonwovenError` to exit status 2 and prints the
class name on stderr, so the names double as stable error codes.
"""


class NonwovenError(Exception):
    """Base class for every data/processing error raised by the package."""


class ParseError(NonwovenError):
    pass


class UnsupportedFormat(NonwovenError):
    pass


class InvalidParameter(NonwovenError, ValueError):
    pass


class NotBimodal(NonwovenError):
    pass


class MissingCalibration(NonwovenError):
    pass


class DegenerateFit(NonwovenError):
    pass


class NoSignal(NonwovenError):
    pass


class PlacementFailure(NonwovenError):
    pass


class IncompleteCalibration(NonwovenError):
    pass


class NonMonotoneCalibration(NonwovenError):
    pass


class IncompleteDataset(NonwovenError):
    pass


class DivergenceError(NonwovenError):
    pass


class EmptyForeground(NonwovenError):
    pass


class EmptyDistribution(NonwovenError):
    pass
