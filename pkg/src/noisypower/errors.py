"""Exception types shared across the package."""


class NoisyPowerError(Exception):
    """Base class for all errors raised by this package."""


class RankDeficient(NoisyPowerError):
    """A matrix handed to Gram-Schmidt lost column rank.

    When raised from inside an iteration, ``iteration`` holds the (1-based)
    step that failed and ``trace`` the records collected before it.
    """

    def __init__(self, message, iteration=None, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace


class NoConvergence(NoisyPowerError):
    pass


class DimensionMismatch(NoisyPowerError, ValueError):
    pass


class PreconditionUnmet(NoisyPowerError):
    """Hypotheses of a checked inequality do not hold; not a violation."""


class GapNonpositive(NoisyPowerError, ValueError):
    pass


class BudgetExceeded(NoisyPowerError):
    pass


class StreamExhausted(NoisyPowerError):
    pass


class CalibrationFailed(NoisyPowerError):
    pass


class InvalidBudget(NoisyPowerError, ValueError):
    pass


class ConfigInvalid(NoisyPowerError, ValueError):
    """Raised by the CLI; ``field`` names the offending setting."""

    def __init__(self, field, message=None):
        super().__init__(message or f"invalid value for '{field}'")
        self.field = field
