"""Exception types shared across the engine."""


class InfillError(Exception):
    """Base class for all engine errors."""


class InvalidDistribution(InfillError):
    """A log-probability vector is non-finite or not normalized."""


class InvalidToken(InfillError):
    """A token id falls outside the vocabulary."""


class InvalidQuery(InfillError):
    """A backend query violates the backend's contract."""


class InvalidInput(InfillError):
    """Malformed or empty user-supplied data."""


class ConfigError(InfillError):
    """An engine configuration is internally inconsistent."""


class TooLarge(InfillError):
    """An exact enumeration would exceed the hard size limit."""


class BackendUnavailable(InfillError):
    """A remote backend could not be reached in time."""


class ProtocolError(InfillError):
    """A remote backend replied with a malformed payload."""
