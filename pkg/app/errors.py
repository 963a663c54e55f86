class JelliumError(Exception):
    """Base class for every failure raised by the library."""


class DomainError(JelliumError, ValueError):
    """Arguments outside the domain of an operation."""


class CondensationError(DomainError):
    def __init__(self, rho: float, critical_density: float):
        self.rho = rho
        self.critical_density = critical_density
        super().__init__(
            f"Bose density {rho:.12g} is not below the critical density rho_c = {critical_density:.12g}"
        )


class NumericError(JelliumError, RuntimeError):
    def __init__(self, message: str, achieved_tolerance: float | None = None):
        self.achieved_tolerance = achieved_tolerance
        if achieved_tolerance is not None:
            message = f"{message} (achieved tolerance {achieved_tolerance:.3e})"
        super().__init__(message)


class ConsistencyError(NumericError):
    """Two independent evaluation routes disagree."""


class TruncationError(NumericError):
    """A mode cutoff or occupation cap discards too much weight."""


class ConstructionError(JelliumError, RuntimeError):
    """A derived object fails one of its defining checks."""
