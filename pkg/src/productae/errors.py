"""Exception types shared across the package."""


class ProductAEError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ProductAEError, ValueError):
    """Raised when tensor shapes are incompatible with an operation."""


class ContractError(ProductAEError, RuntimeError):
    """Raised when a call violates an API precondition (e.g. non-scalar loss)."""


class ConfigError(ProductAEError, ValueError):
    """Raised for invalid configuration values.

    ``field`` names the offending key (dotted path) and ``line`` the source
    line when the value came from a config file and the line is known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)


class CheckpointError(ProductAEError):
    """Raised when a checkpoint cannot be read, written or applied.

    ``reason`` is a short machine-readable tag such as ``"bad-magic"``,
    ``"unsupported-version"``, ``"truncated"``, ``"bad-header"``,
    ``"shape-mismatch"`` or ``"missing"``.
    """

    def __init__(self, reason, message, path=None):
        self.reason = reason
        self.path = path
        where = f" ({path})" if path is not None else ""
        super().__init__(f"[{reason}] {message}{where}")


class EnumerationLimitError(ProductAEError, ValueError):
    """Raised when a brute-force enumeration would exceed its size bound."""
