"""Exception types shared across the package.

Every error raised on purpose derives from MvscError, so callers can
catch one base class. The subclasses split along the lines the CLI maps
to distinct exit codes: bad parameters, shape mismatches, numerical
failures, malformed data files, and dataset-protocol violations.
"""


class MvscError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(MvscError, ValueError):
    """A parameter, flag, or configuration value is outside its allowed range."""


class DimensionError(MvscError, ValueError):
    """Array shapes do not conform; the message names the offending view."""


class NumericError(MvscError, ArithmeticError):
    """Numerical failure: non-finite values, no convergence, singular system.

    ``last_estimate`` carries the final iterate of an iterative method
    that failed to converge, when one exists.
    """

    def __init__(self, message, last_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate


class DegenerateInputError(NumericError):
    """An input is identically zero where the algorithm needs it nonzero."""


class DataError(MvscError, ValueError):
    """A data file is missing fields, malformed, truncated, or of an unsupported version."""


class ProtocolError(MvscError, ValueError):
    """The dataset cannot support the requested evaluation protocol."""
