"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a configuration value is missing, malformed or out of range."""


class CapacityError(RuntimeError):
    """Raised when a UE cannot be served because every AP is pilot-saturated.

    Carries the index of the first unserved UE in ``ue``.
    """

    def __init__(self, ue, message=None):
        self.ue = int(ue)
        super().__init__(message or f"no AP with spare pilot capacity left for UE {ue}")


class NumericalError(RuntimeError):
    """Raised on numerical breakdown (singular training system, indefinite
    correlation matrix beyond the clipping tolerance, ...)."""


class UnsupportedModeError(RuntimeError):
    """Raised when an operation is asked to run in a mode it does not model."""
