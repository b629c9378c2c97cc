"""Exception hierarchy shared across the package."""


class ArqWepError(Exception):
    pass


class ConfigurationError(ArqWepError, ValueError):
    """Invalid model, session or experiment parameters."""


class InvalidSeedError(ArqWepError, ValueError):
    pass


class MalformedFrameError(ArqWepError, ValueError):
    pass


class DesyncError(ArqWepError):
    """Fatal loss of synchronization between sender and receiver; aborts the session."""


class ProtocolCompleteError(ArqWepError):
    pass


class IncompleteKeyError(ArqWepError):
    pass


class DivergentExpectationError(ArqWepError, ValueError):
    pass


class EventOrderError(ArqWepError):
    """An eavesdropper event arrived out of transmission order (harness bug)."""
