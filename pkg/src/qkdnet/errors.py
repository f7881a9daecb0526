"""Exception hierarchy for qkdnet.

Two families matter to callers: configuration/usage errors (bad
parameters, malformed files) and protocol aborts (a session ran and
decided not to emit a key). The CLI maps them to different exit codes.
"""


class QKDError(Exception):
    """Base class for every error raised by qkdnet."""


class ChannelParamError(QKDError, ValueError):
    """A physical parameter is outside its domain."""


class NoDataError(QKDError, ValueError):
    """A statistic was requested over zero observations."""


class EmptySequenceError(QKDError, ValueError):
    pass


class ProtocolDesyncError(QKDError, ValueError):
    """Two parties hold sequences that cannot be aligned."""


class TopologyError(QKDError, ValueError):
    pass


class ConfigError(QKDError, ValueError):
    """Invalid experiment or topology file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class RoutingError(QKDError):
    """No QBS path joins the requested cells."""


class ProtocolAbort(QKDError):
    """A session terminated without producing a final key.

    ``transcript`` carries whatever was recorded up to the abort.
    """

    def __init__(self, message, transcript=None):
        super().__init__(message)
        self.transcript = transcript


class InsufficientKeyError(ProtocolAbort):
    """Parameter estimation would consume the whole sifted key."""


class ReconciliationError(ProtocolAbort):
    """Error correction failed to converge or verification mismatched."""


class KeyExhaustedError(ProtocolAbort):
    """The pairwise key bank cannot cover a one-time-pad draw."""
