"""Exception types shared across the package.

Validation problems (bad arguments, malformed files, config mismatches)
derive from ValueError so they behave naturally with code that catches
standard exceptions; runtime failures (e.g. an infeasible pose sampler)
derive from RuntimeError.
"""


class MaskposeError(Exception):
    """Base class for all package-specific errors."""


class InvalidQuaternionError(MaskposeError, ValueError):
    """Quaternion input with zero or non-unit norm where one is required."""


class BehindCameraError(MaskposeError, ValueError):
    """Geometry at or behind the camera plane (z <= 0) during projection."""


class MeshParseError(MaskposeError, ValueError):
    """Malformed OBJ content; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyMeshError(MaskposeError, ValueError):
    """Mesh with no usable (non-degenerate) triangles."""


class EmptyMaskError(MaskposeError, ValueError):
    """Operation requiring a nonempty mask got an all-zero one."""


class SamplerExhaustedError(MaskposeError, RuntimeError):
    """Pose sampler hit its rejection limit; the config is infeasible."""


class ConfigError(MaskposeError, ValueError):
    """Inconsistent or infeasible configuration."""


class FormatError(MaskposeError, ValueError):
    """Malformed binary or text artifact (image, checkpoint, manifest)."""


class DatasetValidationError(MaskposeError, ValueError):
    """Manifest record violating dataset invariants; names the record."""

    def __init__(self, message: str, record_id: str | None = None):
        if record_id is not None:
            message = f"record {record_id!r}: {message}"
        super().__init__(message)
        self.record_id = record_id
