"""Exception hierarchy shared by every sketchcbr module."""


class SketchError(Exception):
    """Base class for all sketchcbr errors."""


class ControlPointError(SketchError):
    pass


class DegenerateGeometryError(SketchError):
    pass


class DimensionError(SketchError):
    pass


class ConfigError(SketchError):
    pass


class CorrespondenceError(SketchError):
    pass


class IoError(SketchError, OSError):
    """A required file or directory is missing or unreadable."""


class FormatError(SketchError):
    """A file exists but its content does not match the expected format."""


class ValidationError(SketchError):
    pass


class VersionError(SketchError):
    pass


class PatchTooSmallError(SketchError):
    pass


class EmptyRegionError(SketchError):
    pass


class RegionMismatchError(SketchError):
    pass


class InsufficientDataError(SketchError):
    pass


class DegenerateTargetError(SketchError):
    pass


class SolverError(SketchError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CompositionError(SketchError):
    pass
