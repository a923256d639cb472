"""Exception hierarchy for levy_malliavin."""


class LevyMalliavinError(Exception):
    """Base class for all package errors."""


class ModelError(LevyMalliavinError, ValueError):
    """Invalid model description."""


class SigmaNotPositive(ModelError):
    pass


class MassAtZero(ModelError):
    pass


class NegativeIntensity(ModelError):
    pass


class TNotOnGrid(LevyMalliavinError, ValueError):
    pass


class OrderTooLarge(LevyMalliavinError, ValueError):
    pass


class FourierTailTooHeavy(LevyMalliavinError, RuntimeError):
    pass


class UnsupportedVariant(LevyMalliavinError, TypeError):
    pass


class InnerBudgetZero(LevyMalliavinError, ValueError):
    pass


class ExtrapolationBeyondTable(LevyMalliavinError, ValueError):
    pass


class ConfigError(LevyMalliavinError, ValueError):
    """Raised for malformed run configurations; ``key`` names the offender."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
