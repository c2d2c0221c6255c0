"""Exception hierarchy shared by all idscale modules.

Every error carries a stable machine-readable ``kind`` string, which the CLI
maps to exit codes and error JSON.
"""


class IdscaleError(Exception):
    """Base class for all idscale errors."""

    kind = "error"
    exit_code = 1


class InvalidArgumentError(IdscaleError, ValueError):
    kind = "invalid-argument"
    exit_code = 2


class DegenerateDatasetError(IdscaleError):
    kind = "degenerate-dataset"
    exit_code = 3


class InsufficientGraphDepthError(IdscaleError):
    kind = "insufficient-graph-depth"
    exit_code = 4


class DegenerateScaleError(IdscaleError):
    kind = "degenerate-scale"
    exit_code = 5


class EstimateUnboundedError(IdscaleError):
    """Closed-form estimate diverges (no inner-ball counts).

    ``estimate`` holds the +inf sentinel so callers can mark the scale
    unusable instead of plotting a spurious number.
    """

    kind = "estimate-unbounded"
    exit_code = 6

    def __init__(self, message, estimate=float("inf")):
        super().__init__(message)
        self.estimate = estimate


class DegenerateSampleError(IdscaleError):
    kind = "degenerate-sample"
    exit_code = 7


class OptimizationFailureError(IdscaleError):
    kind = "optimization-failure"
    exit_code = 8


class ParseError(IdscaleError):
    kind = "parse-error"
    exit_code = 9

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
