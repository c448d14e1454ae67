"""Exception hierarchy shared by all solver modules."""


class RabiError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(RabiError, ValueError):
    """Invalid parameters or run configuration."""


class NoConvergence(RabiError):
    def __init__(self, message, bracket=None):
        super().__init__(message if bracket is None else f"{message} (bracket={bracket})")
        self.bracket = bracket


class SingularElimination(RabiError):
    pass


class DivergentCritical(RabiError):
    pass


class OutsideInvertedRegime(RabiError):
    pass


class DegenerateDenominator(RabiError):
    pass


class NoCoexistence(RabiError):
    pass


class CutoffLimit(RabiError):
    pass


class ShapeMismatch(RabiError, ValueError):
    pass


class SingularSystem(RabiError):
    pass


class ResidualTooLarge(RabiError):
    pass


class GridTooNarrow(RabiError):
    pass


class DegenerateWeight(RabiError):
    pass


class ZeroDenominator(RabiError, ZeroDivisionError):
    pass


class DegenerateMu(RabiError):
    pass


class NormalizationOverflow(RabiError):
    pass


class UnsupportedMoment(RabiError):
    pass


class RegimeViolation(RabiError):
    pass


class Unstable(RabiError):
    pass


class NoBracket(RabiError):
    pass


class NonPositiveData(RabiError, ValueError):
    pass


class InsufficientData(RabiError, ValueError):
    pass
