"""Exception hierarchy shared across the toolkit."""


class CallRouteError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CallRouteError, ValueError):
    """A configuration value or file is invalid; the message names the field."""


class InvalidStateError(CallRouteError, ValueError):
    """An observation or model state violates its bounds."""


class InvalidActionError(CallRouteError, ValueError):
    """A routing action does not index an existing staff member."""


class InvalidParameterError(CallRouteError, ValueError):
    """A numeric parameter (e.g. policy logits) is non-finite or out of range."""


class SchedulingError(CallRouteError, RuntimeError):
    """Internal simulator consistency failure (event scheduled into the past,
    departure for an idle staff member, routing without a pending arrival)."""


class EpisodeFinished(CallRouteError, RuntimeError):
    """step() was called on an environment with no pending arrival."""


class EpisodeNotFinished(CallRouteError, RuntimeError):
    """Episode metrics were requested before the event queue drained."""


class PolicyFileError(CallRouteError, ValueError):
    """A policy file does not match the expected schema; the message names the field."""


class ConvergenceError(CallRouteError, RuntimeError):
    """Value iteration hit its sweep limit before reaching the tolerance."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class TrainingDiverged(CallRouteError, RuntimeError):
    """A policy-gradient update produced non-finite parameters."""
