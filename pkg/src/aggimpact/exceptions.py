"""Exception hierarchy shared by the pipeline stages.

The CLI maps :class:`UsageError` to exit code 1, :class:`DataError` to
exit code 2 and :class:`ConvergenceError` to exit code 3.
"""


class AggImpactError(Exception):
    pass


class UsageError(AggImpactError, ValueError):
    """Bad command line or configuration."""


class DataError(AggImpactError, ValueError):
    """Input data cannot be processed as requested."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RejectedSessionError(DataError):
    """A trading day was rejected (shortened hours, no trades left, ...)."""


class InsufficientDataError(DataError):
    pass


class DegenerateVarianceError(DataError):
    pass


class UndefinedEtaError(DataError):
    """No alternating price movements, so eta = N_c / (2 N_a) is undefined."""


class ConvergenceError(AggImpactError, RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
