"""Exception types shared across the package.

Every error that stems from bad input derives from :class:`ValidationError`,
which the CLI maps to exit status 2 and a JSON error record.
"""

from __future__ import annotations


class ValidationError(ValueError):
    code = "validation_error"

    def __init__(self, message: str, location: str | None = None):
        super().__init__(message)
        self.message = message
        self.location = location

    def to_json(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.location is not None:
            out["location"] = self.location
        return out


class BenchmarkFormatError(ValidationError):
    code = "benchmark_format"


class DuplicateRecordError(ValidationError):
    code = "duplicate_record"


class NonPositiveValueError(ValidationError):
    code = "non_positive_value"


class CurveFitError(ValidationError):
    code = "curve_fit"


class ModelDoesNotFitError(ValidationError):
    code = "model_does_not_fit"


class TuningError(ValidationError):
    code = "tuning"


class InsufficientDataError(ValidationError):
    code = "insufficient_data"


class UnknownNodeError(ValidationError):
    code = "unknown_node"


class InconsistentInputError(ValidationError):
    code = "inconsistent_input"


class UnderdeterminedError(ValidationError):
    code = "underdetermined"


class DimensionError(ValidationError):
    code = "dimension_mismatch"


class NonFiniteError(ValidationError):
    code = "non_finite"
