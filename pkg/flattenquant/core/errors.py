"""
Exception hierarchy for FlattenQuant
Every failure a user can cause maps to a stable code and a process exit code
"""

from typing import Any, Dict, Optional


class FlattenQuantError(Exception):
    """Base error; carries a stable code and the CLI exit code"""

    code = "flattenquant_error"
    exit_code = 2

    def __init__(self, message: str, detail: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.message = message
        self.detail = detail or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.message, "code": self.code, "detail": self.detail}


class ArchiveFormatError(FlattenQuantError):
    """A tensor archive could not be parsed"""

    code = "archive_format"


class BadMagicError(ArchiveFormatError):
    code = "bad_magic"


class TruncatedArchiveError(ArchiveFormatError):
    code = "truncated_payload"


class DuplicateTensorError(ArchiveFormatError):
    code = "duplicate_name"


class NonFiniteTensorError(ArchiveFormatError):
    code = "non_finite"


class UnsupportedFormatError(ArchiveFormatError):
    code = "unsupported_format"


class ShapeMismatchError(FlattenQuantError):
    code = "shape_mismatch"


class EmptyCalibrationError(FlattenQuantError):
    code = "empty_calibration"


class DegenerateCalibrationError(FlattenQuantError):
    code = "degenerate_calibration"


class DegenerateScaleError(FlattenQuantError):
    code = "degenerate_scale"


class PlanMismatchError(FlattenQuantError):
    code = "plan_mismatch"


class AccumulatorOverflowError(FlattenQuantError):
    code = "accumulator_overflow"


class IllConditionedHessianError(FlattenQuantError):
    code = "ill_conditioned_hessian"


class HistogramMismatchError(FlattenQuantError):
    code = "histogram_mismatch"


class InvalidParameterError(FlattenQuantError):
    code = "invalid_parameter"


class ArtifactError(FlattenQuantError):
    """A JSON artifact is missing or inconsistent with the run"""

    code = "artifact_error"
