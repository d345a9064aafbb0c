"""Exception hierarchy shared by every cimr module."""


class CIMRError(Exception):
    pass


class DomainError(CIMRError):
    """Invalid input to a world, encoder, fusion or calibration operation."""


class OutOfBounds(DomainError):
    pass


class CellFull(DomainError):
    pass


class NoSuchObject(DomainError):
    pass


class AnswerKindMismatch(DomainError):
    pass


class MalformedObservation(DomainError):
    pass


class EmptyFusionInput(DomainError):
    pass


class DimMismatch(DomainError):
    pass


class BadCalibration(DomainError):
    pass


class BackendError(CIMRError):
    """Failure talking to a reasoning backend.

    ``trace`` is filled in by the engine with the partial episode trace when
    the error escapes an episode.
    """

    trace = None


class Unreachable(BackendError):
    pass


class BadReply(BackendError):
    pass


class ConfigError(CIMRError):
    pass


class UnknownKey(ConfigError):
    pass


class BadVariant(ConfigError):
    pass


class BadTargets(ConfigError):
    """Calibration targets in a config are not strictly increasing in (0, 100)."""


class NoEpisodes(ConfigError):
    pass


class TraceIOError(CIMRError):
    pass


class BadTrace(TraceIOError):
    pass


class WriteError(TraceIOError):
    pass
