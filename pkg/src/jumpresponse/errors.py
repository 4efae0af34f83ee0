"""Exception and warning types raised across the package."""


class JumpResponseError(Exception):
    """Base class for all package errors."""


class NotIrreducible(JumpResponseError):
    pass


class SolverFailure(JumpResponseError):
    """A linear solve or iteration did not reach the requested residual."""


class StepperFailure(SolverFailure):
    """The adaptive ODE stepper failed or breached its tolerance."""


class TruncatedPath(JumpResponseError):
    """A path functional was requested on a path that hit the jump cap."""


class TruncatedPathsExceeded(JumpResponseError):
    pass


class WeightDegeneracy(JumpResponseError):
    """Importance weights collapsed (effective sample size too small)."""


class CrossCheckFailure(JumpResponseError):
    """Two independent algorithms for the same quantity disagree."""


class NonPositiveRate(JumpResponseError, ValueError):
    pass


class ConfigError(JumpResponseError, ValueError):
    """Malformed model document. ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class HeavyTailWarning(UserWarning):
    pass
