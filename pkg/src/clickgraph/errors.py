"""Exception types shared across the package."""


class ClickgraphError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ClickgraphError, ValueError):
    """A configuration value is out of range, or a key is unknown."""


class ContractViolation(ClickgraphError, ValueError):
    """An argument breaks a documented precondition (dim or type mismatch)."""


class NumericError(ClickgraphError, ArithmeticError):
    """A non-finite value showed up where only finite numbers are allowed."""


class NotWarmedUpError(ClickgraphError, RuntimeError):
    """A negative-sample queue was drawn from before anything was pushed."""


class MetricUndefinedError(ClickgraphError, ValueError):
    """A metric has no defined value for this input (e.g. single-class AUC)."""


class LogFormatError(ClickgraphError, ValueError):
    """A behavior log is too malformed to trust (>10% bad lines)."""
