"""Exception hierarchy shared by all modules."""


class SNCertError(Exception):
    """Base class for every error raised by this package."""


class MalformedInput(SNCertError):
    pass


class DimensionMismatch(SNCertError):
    pass


class OutOfRangeLambda(SNCertError):
    pass


class NoSamplesOnFace(SNCertError):
    pass


class NotASubcomplex(SNCertError):
    pass


class NotABlock(SNCertError):
    pass


class BadInterface(SNCertError):
    pass


class OutOfChart(SNCertError):
    pass


class Unclassifiable(SNCertError):
    pass


class PreconditionViolated(SNCertError):
    pass


class DecreaseFailed(SNCertError):
    def __init__(self, message, worst_point=None, worst_value=None):
        super().__init__(message)
        self.worst_point = worst_point
        self.worst_value = worst_value


class OverlappingCutoffs(SNCertError):
    pass


class InconsistentGraphic(SNCertError):
    pass


class StageMismatch(SNCertError):
    pass


class NonFiniteValue(SNCertError):
    pass


class LostBranch(SNCertError):
    pass


class InsufficientData(SNCertError):
    pass


class Inconclusive(SNCertError):
    pass


class MissingArtifact(SNCertError):
    pass


class ConfigInvalid(SNCertError):
    pass
