"""Exception types shared across the package."""


class CertUnlearnError(Exception):
    pass


class DomainError(CertUnlearnError, ValueError):
    """An input lies outside the domain where a formula or rule is defined."""


class DataFormatError(CertUnlearnError, ValueError):
    """Malformed dataset file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ModelFormatError(CertUnlearnError, ValueError):
    pass


class ConfigError(CertUnlearnError, ValueError):
    pass


class NumericalError(CertUnlearnError, RuntimeError):
    """Raised when an optimizer or factorization cannot produce a usable result."""
