"""Exception hierarchy shared by the pipeline stages.

Exit-code mapping (see cli): ConfigurationError / EstimationError -> 1,
IntegrityError / MigrationError -> 2.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(PipelineError):
    """Invalid parameters, incompatible shapes, or unresolvable paths."""


class GeometryError(PipelineError):
    """Geometrically invalid input, e.g. non-positive depth in a reprojection."""


class EstimationError(PipelineError):
    """Degenerate input to an estimator (too few or collinear correspondences)."""


class IntegrityError(PipelineError):
    """Missing or corrupt dataset file; message names the offending file."""


class MigrationError(PipelineError):
    """Dataset format version not understood by this package version."""
