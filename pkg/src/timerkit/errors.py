"""Exception types shared across the package."""


class TimerKitError(Exception):
    """Base class for all timerkit errors."""


class DomainError(TimerKitError, ValueError):
    """Input outside the mathematical domain of an operation."""


class PoleError(DomainError):
    """Evaluation requested exactly at (or too close to) a pole."""


class OverflowSignal(TimerKitError, OverflowError):
    """Result magnitude exceeds the representable range.

    Callers should switch to the logarithmic / exponentially scaled variant.
    """


class NoConvergenceError(TimerKitError, RuntimeError):
    """An iterative evaluation or quadrature failed to converge."""


class ContourError(DomainError):
    """Bromwich contour placed at or below the validity bound."""


class CensoringError(TimerKitError, RuntimeError):
    """Too many Monte Carlo paths hit the simulation time cap."""


class ConfigError(TimerKitError, ValueError):
    """Invalid run configuration (named field and reason in the message)."""
