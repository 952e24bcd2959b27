"""Exception types shared across the package."""


class CapaMinerError(Exception):
    """Base class for all package errors."""


class ZeroVariance(CapaMinerError):
    """A window is (numerically) constant and carries no shape."""


class NoValidWindow(CapaMinerError):
    """No non-constant window is available for candidate selection."""


class EmptyDataset(CapaMinerError):
    """The mining dataset contains no series."""


class MetricMismatch(CapaMinerError):
    """A pattern is applied to a series of a different metric."""


class MissingCreationDate(CapaMinerError):
    """A pull-request record lacks its mandatory creation date."""


class DegenerateData(CapaMinerError):
    """Training data contains a single class."""


class EmptyTable(CapaMinerError):
    """A contingency table has no usable rows/columns."""


class InsufficientSamples(CapaMinerError):
    """An occurrence-level sample has fewer than two points."""


class MissingColumn(CapaMinerError):
    """A required CSV column is absent."""


class NonFiniteValue(CapaMinerError):
    """A metric value failed to parse as a finite number."""

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"non-finite value at row {row}")


class MalformedLine(CapaMinerError):
    """A JSON-lines record failed to parse."""

    def __init__(self, line_number, message=None):
        self.line_number = line_number
        super().__init__(message or f"malformed JSON at line {line_number}")


class RadarError(CapaMinerError):
    """Illegal radar lifecycle transition or unknown repository."""


class AuthError(CapaMinerError):
    """Remote API rejected the configured credentials."""


class RateLimited(CapaMinerError):
    """Remote API rate limit persisted past the retry budget."""


class NotFound(CapaMinerError):
    """Remote resource does not exist."""


class ConfigError(CapaMinerError):
    """Invalid or incomplete pipeline configuration."""
