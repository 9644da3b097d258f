"""Exception hierarchy shared by every subsystem."""


class GreatScoreError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(GreatScoreError, ValueError):
    """An argument or input record violates its documented contract."""


class EndpointError(GreatScoreError):
    """A remote prediction endpoint failed permanently."""


class ProtocolError(EndpointError):
    """An endpoint answered, but the response does not follow the wire protocol."""


class RunAborted(GreatScoreError):
    """A scoring run stopped early because the classifier failed.

    ``completed`` samples were scored before the failure; ``partial_mean``
    is their mean (``None`` when nothing completed).
    """

    def __init__(self, message, completed, requested, partial_mean=None):
        super().__init__(message)
        self.completed = completed
        self.requested = requested
        self.partial_mean = partial_mean


class InvariantViolation(GreatScoreError):
    """A verification suite observed a broken hard invariant."""
