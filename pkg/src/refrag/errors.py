"""Exception hierarchy shared across the engine.

The CLI maps these onto its exit-code contract: DataError -> 2,
BackendError -> 3.
"""


class RefragError(Exception):
    """Base class for all engine errors."""


class DataError(RefragError):
    """Malformed or inconsistent input data (corpus, QA, run, judge files)."""


class BackendError(RefragError):
    """A remote scorer or generator backend failed."""

    def __init__(self, message: str, *, backend: str = "") -> None:
        super().__init__(message)
        self.backend = backend


class ProtocolError(BackendError):
    """A remote backend answered with a malformed payload."""
