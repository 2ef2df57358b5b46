"""Error taxonomy shared by the library and the CLI.

Exit-code contract: 0 success, 1 usage/configuration error, 2 data error,
3 numeric failure.
"""


class EngineError(Exception):
    """Base class; `exit_code` drives the CLI's process exit status."""

    exit_code = 1


class ConfigError(EngineError):
    """Bad configuration: invalid fields, shape mismatches, unusable flags."""

    exit_code = 1


class DataError(EngineError):
    """Bad data: malformed records, out-of-range tokens, schema mismatches."""

    exit_code = 2


class UndefinedMetricError(DataError):
    """Metric has no defined value on this input (e.g. single-class AUC)."""


class NumericError(EngineError):
    """Non-finite loss or gradient; carries diagnostics for the run log."""

    exit_code = 3

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
