"""Exception hierarchy shared across the package."""


class MemSDEError(Exception):
    """Base class for all package errors."""


class ContractViolation(MemSDEError, ValueError):
    """An input broke a documented precondition (endpoint mismatch, bad dt, ...)."""


class OutOfRangeError(MemSDEError, IndexError):
    """A requested time lies outside the stored window."""


class DivergenceError(MemSDEError, FloatingPointError):
    """A functional could not be evaluated to a finite value."""

    def __init__(self, message, lag=None):
        super().__init__(message)
        self.lag = lag


class BlowupError(MemSDEError, RuntimeError):
    """The guarded Lyapunov value crossed the blowup radius (discrete tau_R)."""

    def __init__(self, step, time, value, radius):
        super().__init__(
            f"blowup at step {step} (t={time:.6g}): guard value {value:.6g} >= {radius:.6g}"
        )
        self.step = step
        self.time = time
        self.value = value
        self.radius = radius


class ContractionFailure(MemSDEError, RuntimeError):
    """Picard iteration stopped contracting; retry with a shorter chunk."""


class UnsupportedOperation(MemSDEError, TypeError):
    """The object lacks metadata required by the operation."""


class UnreliableEstimate(MemSDEError, RuntimeError):
    """Too many Monte Carlo replicas were excluded."""


class InfiniteLyapunovError(MemSDEError, ValueError):
    """An aggregate received the +inf sentinel for V."""


class PartialResultError(MemSDEError, RuntimeError):
    """Some independent tasks failed; ``failed`` lists them, ``partial`` holds the rest."""

    def __init__(self, message, failed, partial=None):
        super().__init__(message)
        self.failed = list(failed)
        self.partial = partial


class FormatError(MemSDEError, ValueError):
    """Malformed trajectory file."""


class ConfigError(MemSDEError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class ReconstructionError(MemSDEError, RuntimeError):
    """The high-mode reconstruction did not converge within the allowed lookback."""

    def __init__(self, message, delta=None, lookback=None):
        super().__init__(message)
        self.delta = delta
        self.lookback = lookback
