"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``DataError`` subclasses exit 2,
``NumericalError`` exits 3.
"""


class GanTsneError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GanTsneError, ValueError):
    """Operand shapes do not line up."""


class InputError(GanTsneError, ValueError):
    """An argument is outside the accepted domain."""


class ContractError(GanTsneError, RuntimeError):
    """An object is used in a state its operation does not accept."""


class DataError(GanTsneError):
    """Problem with on-disk data."""


class FormatError(DataError, ValueError):
    """Structurally malformed file (bad magic, wrong field count)."""


class TruncatedError(DataError, ValueError):
    """File is shorter than its header declares."""


class ConsistencyError(DataError, ValueError):
    """Paired inputs disagree (e.g. image and label counts)."""


class LabelRangeError(DataError, ValueError):
    """A label lies outside 0..9."""


class ParseError(DataError, ValueError):
    """A field could not be parsed as a number."""


class DegenerateDataError(GanTsneError, ValueError):
    """Input carries no usable geometry (e.g. all points coincide)."""


class NumericalError(GanTsneError, ArithmeticError):
    """A computation produced NaN or Inf."""
