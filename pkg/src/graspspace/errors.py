"""Exception types raised across the package."""

from __future__ import annotations


class GraspSpaceError(Exception):
    """Base class for every error raised by graspspace."""


class DegenerateQuaternionError(GraspSpaceError, ValueError):
    pass


class NumericError(GraspSpaceError, ValueError):
    pass


class DegenerateNormalError(GraspSpaceError, ValueError):
    pass


class SpreadRangeError(GraspSpaceError, ValueError):
    pass


class InvalidStartError(GraspSpaceError):
    """The gripper starts in penetration with the object."""


class ContactError(GraspSpaceError, ValueError):
    pass


class ValidationError(GraspSpaceError, ValueError):
    pass


class ParseError(GraspSpaceError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateStatsError(GraspSpaceError, ValueError):
    pass


class InsufficientPrimitivesError(GraspSpaceError):
    pass


class DivergenceError(GraspSpaceError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")


class ModelFileError(GraspSpaceError):
    """Corrupt, truncated or incompatible model file."""


class VersionMismatchError(ModelFileError):
    pass


class ArchitectureMismatchError(ModelFileError):
    pass


class PlanningFailure(GraspSpaceError):
    def __init__(self, message: str, telemetry: dict | None = None):
        self.telemetry = telemetry or {}
        super().__init__(message)


class NoSuccessError(GraspSpaceError, ValueError):
    pass


class ConfigError(GraspSpaceError, ValueError):
    pass
