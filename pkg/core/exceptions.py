"""
Custom Exception Classes for the Application

Every class carries the exit code the command line maps it to.
"""


class AppError(Exception):
    """Base class for application-specific errors."""

    exit_code = 1


class ConfigError(AppError):
    """Error related to experiment or command-line configuration."""

    exit_code = 2


class DataLoaderError(AppError):
    """Error occurring while loading or validating a data file."""

    exit_code = 3


class MissingColumnError(DataLoaderError):
    """A required column (e.g. the label column) is absent."""

    pass


class NonNumericFeatureError(DataLoaderError):
    """A feature cell could not be parsed as a number."""

    pass


class SingleClassError(DataLoaderError):
    """A classification table holds a single distinct label."""

    pass


class MissingLabelError(DataLoaderError):
    """A classification row has an empty label cell."""

    pass


class EmptyTableError(DataLoaderError):
    """A table has no rows to draw from."""

    pass


class LoggedDataError(DataLoaderError):
    """A logged-data file violates the interchange format."""

    pass


class DataFileNotFoundError(DataLoaderError, FileNotFoundError):
    """An input file does not exist."""

    exit_code = 4


class ResultsWriteError(AppError, OSError):
    """An output file could not be written."""

    exit_code = 4


class DimensionMismatchError(AppError, ValueError):
    """A context vector does not match the environment dimension."""

    exit_code = 3


class EstimationError(AppError, ValueError):
    """Invalid input to an estimator (propensities, weights, bound inputs)."""

    exit_code = 3


class StrictPastViolation(EstimationError):
    """A nuisance update would break the strictly-past ordering."""

    pass


class TreeSearchError(AppError, ValueError):
    """Invalid tree, malformed tree text, or an oversized oracle instance."""

    exit_code = 3
