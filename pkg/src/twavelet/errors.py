"""Exception types shared across the package."""


class TWaveletError(Exception):
    """Base class for all errors raised by twavelet."""


class InvalidInput(TWaveletError, ValueError):
    """Input data or arguments violate a precondition."""


class NumericalError(TWaveletError, ArithmeticError):
    """A computation produced NaN or infinite values."""


class ConfigError(TWaveletError):
    """Model or tree configuration is inconsistent."""
