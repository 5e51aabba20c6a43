"""Exception types shared across the package."""


class CavityEFError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CavityEFError, ValueError):
    """Invalid model parameters, grid geometry or run configuration."""


class UsageError(CavityEFError, ValueError):
    """A function was called with arguments outside its contract."""


class DegenerateInputError(CavityEFError, ValueError):
    """Input is valid in form but carries no usable information (e.g. fully masked)."""


class SolverError(CavityEFError, RuntimeError):
    """Eigensolver failed to converge; ``diagnostics`` holds what is known."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class BracketingError(CavityEFError, RuntimeError):
    """No interior minimum found in a search bracket; ``trace`` holds the scan."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class NumericError(CavityEFError, ArithmeticError):
    """A quantity left its mathematically admissible range."""


class EmptyReportError(CavityEFError, ValueError):
    """Two curves share no valid sample points."""
