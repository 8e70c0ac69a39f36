"""Exception hierarchy shared by every stage of the harness."""


class WaterBenchError(Exception):
    """Base class for all harness errors."""


class ValidationError(WaterBenchError):
    pass


class EmptySeries(ValidationError):
    pass


class NonQuarterlyGap(ValidationError):
    pass


class DuplicateTimestamp(ValidationError):
    pass


class NegativeValue(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class MalformedRow(WaterBenchError):
    pass


class DuplicateObservation(WaterBenchError):
    pass


class InvalidConfig(WaterBenchError):
    pass


class LengthMismatch(WaterBenchError, ValueError):
    pass


class ZeroVector(WaterBenchError, ValueError):
    pass


class EmptyInput(WaterBenchError, ValueError):
    pass


class InsufficientHistory(WaterBenchError):
    pass


class NonConvergence(WaterBenchError):
    pass


class AllFitsFailed(WaterBenchError):
    pass


class ShapeMismatch(WaterBenchError, ValueError):
    pass


class NonFiniteActivation(WaterBenchError, FloatingPointError):
    pass


class DivergedLoss(WaterBenchError):
    pass


class TooShort(WaterBenchError):
    pass


class ConfigError(WaterBenchError):
    pass
