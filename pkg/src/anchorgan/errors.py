"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad dimensions, unknown keys, impossible shapes."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class NumericAbort(RuntimeError):
    """Training hit a non-finite value. Carries the snapshot path if one was saved."""

    def __init__(self, message, snapshot_path=None):
        super().__init__(message)
        self.snapshot_path = snapshot_path
