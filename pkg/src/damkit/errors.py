"""Exception classes shared across the toolkit."""


class DamkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(DamkitError):
    """Bad static configuration: shape mismatch, invalid layer sizes, bad flags."""


class InputError(DamkitError):
    """Bad runtime input: non-unit direction, wrong resolution, missing record."""


class FormatError(DamkitError):
    """Malformed or truncated file; version or length mismatch."""


class DivergenceError(DamkitError):
    """Training produced a non-finite loss or gradient."""
