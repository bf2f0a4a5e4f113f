"""Exception types raised across the package."""


class BrakeOrbitError(Exception):
    """Base class for all package errors."""


class InvalidNonlinearity(BrakeOrbitError, ValueError):
    """Nonlinearity outside the admissible class (bad exponent, mu <= 2, ...)."""


class InvalidField(BrakeOrbitError, ValueError):
    """Field with non-finite values or wrong shape."""


class GridMismatch(BrakeOrbitError, ValueError):
    """Two fields live on different grids."""


class NotAboveLevel(BrakeOrbitError):
    """The ray through a field peaks below the requested level."""


class ShootingFailed(BrakeOrbitError):
    """No overshoot/undershoot bracket in the amplitude range."""


class DictionaryTooSmall(BrakeOrbitError):
    """Too few admissible dictionary members to estimate a constant."""


class ConstraintViolated(BrakeOrbitError):
    """A slice dropped below the level on an unbounded evaluation."""


class NoCrossing(BrakeOrbitError):
    """Bisection for a level-crossing scale failed."""


class NotConverged(BrakeOrbitError):
    """Iterative solver hit its budget; ``result`` holds the best iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConstraintProjectionFailed(BrakeOrbitError):
    """Ray rescaling could not restore V >= b on some slice."""


class NoTransition(BrakeOrbitError):
    """No slice reaches the level on the Plus side."""


class CoreNotConverged(BrakeOrbitError):
    """Assembly requested from an unconverged core segment."""


class ConfigError(BrakeOrbitError, ValueError):
    """Malformed run configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
