"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 2, ProviderError -> 3,
DataError -> 4.
"""


class DivproxyError(Exception):
    """Base class for all package errors."""


class UsageError(DivproxyError):
    """A caller violated a documented precondition or misconfigured a run."""


class DataError(DivproxyError):
    """Input data is malformed, inconsistent, or insufficient."""


class ProviderError(DivproxyError):
    """A sampling or embedding backend failed to produce a usable response."""


class TransportError(ProviderError):
    """Network-level failure that persisted through all retry attempts."""


class ProtocolError(ProviderError):
    """The backend answered, but the payload violated the wire contract."""


class CacheMissError(ProviderError):
    """Replay-only mode was requested and the cache has no matching record."""


class TrainingDivergenceError(DivproxyError):
    """Model training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
