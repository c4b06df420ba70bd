from __future__ import annotations

from typing import Sequence


class GuidedPoseError(Exception):
    pass


class ParameterError(GuidedPoseError, ValueError):
    pass


class ShapeError(GuidedPoseError, ValueError):
    pass


class ValidationError(GuidedPoseError, ValueError):
    pass


class SceneSchemaError(ValidationError):
    def __init__(self, key: str, message: str | None = None) -> None:
        super().__init__(message or f"scene is missing required key {key!r}")
        self.key = key


class TensorFormatError(GuidedPoseError, ValueError):
    pass


class TensorLengthError(GuidedPoseError, ValueError):
    pass


class TensorDataError(GuidedPoseError, ValueError):
    pass


class TensorWriteError(GuidedPoseError, OSError):
    def __init__(self, message: str, *, bytes_written: int) -> None:
        super().__init__(message)
        self.bytes_written = bytes_written


class StatisticsError(GuidedPoseError, ValueError):
    pass


class EmptySystemError(GuidedPoseError, ValueError):
    pass


class DegenerateWeightsError(GuidedPoseError, ValueError):
    pass


class SolverError(GuidedPoseError, ArithmeticError):
    pass


class ProjectionError(GuidedPoseError, ValueError):
    def __init__(self, indices: Sequence[int]) -> None:
        self.indices = tuple(int(i) for i in indices)
        preview = ", ".join(str(i) for i in self.indices[:10])
        suffix = ", ..." if len(self.indices) > 10 else ""
        super().__init__(f"non-positive depth for point indices [{preview}{suffix}]")


class NumericError(GuidedPoseError, ArithmeticError):
    def __init__(self, part: str, value: float) -> None:
        super().__init__(f"loss part {part!r} is not finite ({value!r})")
        self.part = part
        self.value = value


class ContentMismatchError(ValidationError):
    pass
