"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`EvtcastError` so callers
(and the CLI) can separate data/model failures from programming errors.
"""


class EvtcastError(Exception):
    """Base class for all errors raised by evtcast."""


class ParameterError(EvtcastError):
    """An argument violates a documented precondition."""


class ConfigError(ParameterError):
    """A configuration value is invalid or inconsistent."""


class TraceFormatError(EvtcastError):
    """A trace file is missing headers or cannot be parsed."""


class TraceDataError(EvtcastError):
    """A trace file parsed but contains invalid data (non-finite, mismatched rate)."""


class AlignmentError(EvtcastError):
    """Time series could not be aligned (empty intersection, mismatched grids)."""


class SchemaError(EvtcastError):
    """A column/covariate name is missing or unknown."""


class TransformError(EvtcastError):
    """A covariate transform cannot be fitted (constant input, zero variance)."""


class FitError(EvtcastError):
    """A maximum-likelihood fit failed or did not converge."""


class SampleSizeError(FitError):
    """Too few observations for the requested fit."""


class SeparationError(FitError):
    """Logistic fit diverged due to complete separation.

    ``direction`` names the covariate along which the classes separate.
    """

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class SelectionError(EvtcastError):
    """Threshold selection found no admissible grid point."""


class ModelFileError(EvtcastError):
    """A model file is missing, corrupt, or has an unsupported schema version."""


class MetricUndefinedError(EvtcastError):
    """A requested metric is undefined for the given data (e.g. single-class AUC)."""
