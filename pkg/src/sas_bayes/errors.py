"""Exception types raised by sas_bayes."""


class SasBayesError(Exception):
    """Base class for all package errors."""


class DomainError(SasBayesError, ValueError):
    """A parameter or input lies outside the domain of an operation."""


class QuadratureError(SasBayesError, RuntimeError):
    """The integration window for the size distribution collapsed."""


class ConfigError(SasBayesError, ValueError):
    """Invalid run or sampler configuration.

    ``field`` names the offending configuration entry when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DatasetError(SasBayesError, ValueError):
    """Malformed dataset file. ``row`` is 1-based, counting the header."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class InsufficientSamplesError(SasBayesError, ValueError):
    pass


class ChainFileError(SasBayesError, ValueError):
    """Persisted sampler output is missing or inconsistent."""
