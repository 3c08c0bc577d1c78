"""Exception hierarchy for the pipeline.

Every error carries a short machine-parsable ``category`` so the CLI can
emit ``ERROR <category>: <message>`` lines with a nonzero exit code.
"""


class PipelineError(Exception):
    category = "error"


class IoError(PipelineError):
    category = "io"


class VolumeFormatError(IoError):
    """File exists but is not a readable volume in a supported format."""


class DataError(PipelineError):
    """Content-level problems: NaN/Inf voxels, impossible values."""

    category = "data"


class ValidationError(PipelineError):
    """Dataset-level problems: duplicate ids, missing manifest."""

    category = "validation"


class EmptyDatasetError(ValidationError):
    pass


class GeometryError(PipelineError):
    """Grid/shape mismatches between volumes."""

    category = "geometry"


class ParameterError(PipelineError):
    """Invalid argument values (bad target counts, empty fold plans)."""

    category = "parameter"


class ConfigError(PipelineError):
    category = "config"


class StalenessError(PipelineError):
    """A stage ran against artifacts produced under a different config."""

    category = "staleness"


class NumericError(PipelineError):
    """Non-finite values where finite ones are required (diverged loss)."""

    category = "numeric"


class CheckpointError(IoError):
    """Unreadable or incompatible parameter archives."""
