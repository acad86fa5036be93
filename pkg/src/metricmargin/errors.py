"""Exception types shared across the package.

Validation-style errors (bad input data, incompatible files) derive from
``InputError`` so the CLI can map them to exit code 2; everything else under
``MetricMarginError`` maps to exit code 3.
"""


class MetricMarginError(Exception):
    """Base class for all package errors."""


class InputError(MetricMarginError, ValueError):
    """Invalid user-supplied data or configuration."""


class PayloadMismatchError(InputError):
    """Point payload does not match the metric oracle (or another point)."""


class DegenerateDiameterError(InputError):
    """All points coincide; the sample has no usable diameter."""


class IngestError(InputError):
    """A dataset file could not be parsed; message carries the row number."""


class UnknownLabelError(InputError):
    """A label id outside the model's label set was requested."""


class EmptyIndexError(InputError):
    """A nearest-neighbor index cannot be built over zero points."""


class TruncationRangeError(InputError):
    """Truncation called with lower bound above upper bound."""


class CoverSizeLimitError(MetricMarginError):
    """Exact vertex cover requested on a graph above the size limit."""


class DegenerateTrainingError(MetricMarginError):
    """Training cannot produce a usable classifier (empty consistent set)."""


class SchemaVersionError(InputError):
    """Model file was written by a newer schema than this build supports."""
