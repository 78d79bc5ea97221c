"""Exception types raised across the package."""


class SL2LabError(Exception):
    """Base class for all errors raised by sl2lab."""


class DeterminantViolation(SL2LabError, ValueError):
    pass


class DegenerateDirection(SL2LabError, ValueError):
    pass


class ScaleOrderViolation(SL2LabError, ValueError):
    pass


class InsufficientSamples(SL2LabError, ValueError):
    pass


class HeightTooSmall(SL2LabError, ValueError):
    pass


class ThetaOutOfRange(SL2LabError, ValueError):
    pass


class EmptyIntersection(SL2LabError, ValueError):
    pass


class EmptyFiber(SL2LabError, KeyError):
    pass


class ShadingOutsideCurve(SL2LabError, ValueError):
    pass


class NotSeparated(SL2LabError, ValueError):
    pass


class PreconditionViolation(SL2LabError, ValueError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnknownKind(SL2LabError, ValueError):
    pass


class ConfigInfeasible(SL2LabError, ValueError):
    pass


class DegenerateFit(SL2LabError, ValueError):
    pass


class ConfigError(SL2LabError, ValueError):
    pass


class InvariantViolation(SL2LabError, RuntimeError):
    pass
