"""Exception types shared across the package."""


class ForgesimError(Exception):
    """Base class for all package errors."""


class ConfigError(ForgesimError):
    """Bad run configuration (unknown keys, invalid values)."""


class DataError(ForgesimError):
    """Bad input data (integral files, auxiliary matrices, dimensions)."""


class ParseError(DataError):
    """Malformed FCIDUMP or sidecar file; carries a line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MitigationError(ForgesimError):
    """Mitigation stage cannot run (singular assignment matrix, zero Bloch norm)."""


class ConditioningError(ForgesimError):
    """Overlap metric is numerically singular; aborting instead of regularising."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class CoverageError(ForgesimError):
    """A measurement set lacks records needed by an estimator."""
