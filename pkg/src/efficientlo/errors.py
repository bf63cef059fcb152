"""Exception types raised across the package."""


class EfficientLOError(Exception):
    """Base class for all package errors."""


class ZeroQuaternion(EfficientLOError, ValueError):
    pass


class NonUnitQuaternion(EfficientLOError, ValueError):
    pass


class NonRigidMatrix(EfficientLOError, ValueError):
    pass


class ShapeMismatch(EfficientLOError, ValueError):
    pass


class EmptyAxis(EfficientLOError, ValueError):
    pass


class NonScalarLoss(EfficientLOError, ValueError):
    pass


class NonFiniteError(EfficientLOError, FloatingPointError):
    """A tensor operation produced NaN or Inf."""


class EmptyNeighborhood(EfficientLOError):
    """No candidate survived the 3D distance filter."""


class EmptyLevel(EfficientLOError):
    """A pyramid level has no valid points."""


class MalformedScan(EfficientLOError, ValueError):
    pass


class ParseError(EfficientLOError, ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line
        self.path = path


class CheckpointError(EfficientLOError, ValueError):
    pass


class DatasetEmpty(EfficientLOError):
    pass


class NonFiniteLoss(EfficientLOError, FloatingPointError):
    pass


class TrajectoryTooShort(EfficientLOError, ValueError):
    pass
