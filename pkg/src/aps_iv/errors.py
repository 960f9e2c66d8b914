"""Exception hierarchy.

Every error raised by the package derives from :class:`ApsIvError`.  The CLI
maps the three intermediate classes onto its exit codes (config 2, data 3,
estimation 4).
"""


class ApsIvError(Exception):
    """Base class for all package errors."""


class ConfigError(ApsIvError):
    """Invalid configuration or parameters."""


class DataError(ApsIvError):
    """Malformed or inconsistent input data."""


class EstimationError(ApsIvError):
    """A regression could not be computed."""


class EmptyDataset(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")


class NonBinary(DataError):
    def __init__(self, column, value=None):
        self.column = column
        self.value = value
        super().__init__(f"column {column!r} must be 0/1, found {value!r}")


class NonpositiveVariance(ConfigError):
    pass


class NonpositiveBeds(ConfigError):
    pass


class DuplicateCentroids(ConfigError):
    pass


class DomainError(ConfigError):
    pass


class InsufficientSurrogate(ConfigError):
    pass


class NoNondegenerateRows(EstimationError):
    pass


class SingularDesign(EstimationError):
    pass


class WeakDesignSingular(SingularDesign):
    """Instrument/regressor cross-moment matrix is numerically singular."""


class NoCompliers(EstimationError):
    pass


class TooManyFailures(EstimationError):
    pass
