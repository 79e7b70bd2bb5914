"""Error hierarchy. Every error carries a stable ``code`` that travels in wire ERROR frames."""


class GrpCollError(Exception):
    code: int = 1

    def __init__(self, detail: str = ""):
        super().__init__(detail)
        self.detail = detail


# projection / attack
class InvalidDimensionError(GrpCollError):
    code = 10


class UnachievableConditionError(GrpCollError):
    code = 11


class DegenerateMatrixError(GrpCollError):
    code = 12


# privacy
class InvalidScaleError(GrpCollError):
    code = 20


class InvalidBoundsError(GrpCollError):
    code = 21


# nn
class ShapeError(GrpCollError):
    code = 30


class LabelRangeError(GrpCollError):
    code = 31


class EmptyDatasetError(GrpCollError):
    code = 32


class CheckpointError(GrpCollError):
    code = 33


# datasets
class BadMagicError(GrpCollError):
    code = 40


class TruncatedFileError(GrpCollError):
    code = 41


class CountMismatchError(GrpCollError):
    code = 42


class EmptyInputError(GrpCollError):
    code = 43


class RaggedRowError(GrpCollError):
    code = 44


class NonNumericCellError(GrpCollError):
    code = 45


class TargetTooSmallError(GrpCollError):
    code = 46


class TooManyShardsError(GrpCollError):
    code = 47


class DatasetNotFoundError(GrpCollError):
    code = 48


class UnsupportedVersionError(GrpCollError):
    """A key or checkpoint file written by a format version this build cannot read."""

    code = 49


# protocol
class FramingError(GrpCollError):
    code = 50


class ProtocolError(GrpCollError):
    code = 51


class DimensionMismatchError(ProtocolError):
    code = 52


class NotReadyError(ProtocolError):
    code = 53


class DuplicateEndError(ProtocolError):
    code = 54


class PartialDataError(GrpCollError):
    code = 55


class TransportError(GrpCollError):
    code = 56


class RemoteError(GrpCollError):
    """An ERROR frame received from the peer."""

    code = 57

    def __init__(self, remote_code: int, detail: str = ""):
        super().__init__(f"remote error {remote_code}: {detail}")
        self.remote_code = remote_code


class TrainingFailedError(GrpCollError):
    """The coordinator's training step raised something other than a GrpCollError."""

    code = 58


# bench
class UnknownExperimentError(GrpCollError):
    code = 60


class InvalidCompressionError(GrpCollError):
    code = 61
