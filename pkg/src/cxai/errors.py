"""Exception hierarchy.

Every error carries the CLI exit code of its family: configuration problems
exit with 2, bad input data with 3, numerical failures with 4.
"""


class CxaiError(Exception):
    exit_code = 1


class ConfigError(CxaiError):
    exit_code = 2


class DataError(CxaiError):
    exit_code = 3


class NumericalError(CxaiError, ArithmeticError):
    exit_code = 4


class DimensionError(DataError, ValueError):
    """Operand shapes do not fit together."""


class DegenerateInputError(NumericalError, ValueError):
    """Input for which the requested quantity is undefined (zero norm, zero variance, ...)."""


class ZeroVarianceError(DegenerateInputError):
    pass


class ConvergenceError(NumericalError):
    pass


class TrainingDivergedError(NumericalError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch}: loss={loss}")
        self.epoch = epoch
        self.loss = loss


class ConsistencyError(DataError):
    """An activation trace does not belong to the network it is used with."""


# weights file

class WeightsFileError(DataError):
    pass


class BadMagicError(WeightsFileError):
    pass


class VersionMismatchError(WeightsFileError):
    pass


class TruncatedFileError(WeightsFileError):
    pass


class WeightsDimensionError(WeightsFileError):
    pass


class EmptyModelError(WeightsFileError):
    pass


# image files / datasets

class NetpbmError(DataError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(NetpbmError):
    pass


class MalformedHeaderError(NetpbmError):
    pass


class TruncatedDataError(NetpbmError):
    pass


class InconsistentShapeError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class TooSmallError(ConfigError):
    pass


class NotFoundError(DataError):
    pass


# explanation pipeline

class NoContrastError(DataError):
    """No correctly classified instance of the opposite class is available."""


class DegenerateAttributionError(NumericalError):
    """All concept scores are non-positive, so relevance ranges are undefined."""


class NotExplainableError(DataError):
    def __init__(self, instance_id, predicted, true):
        super().__init__(
            f"instance {instance_id!r} is misclassified "
            f"(predicted {predicted}, true {true}); no explanation is produced"
        )
        self.instance_id = instance_id
        self.predicted = predicted
        self.true = true


class InsufficientDataError(DataError):
    pass
