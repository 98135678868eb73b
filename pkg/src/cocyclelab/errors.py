"""Exception hierarchy shared by every module.

Each exception carries an ``exit_code`` used by the command-line front end:
2 for configuration problems, 3 for violated preconditions, 4 for numerical
failures.
"""


class CocycleLabError(Exception):
    exit_code = 4


class NearAntipode(CocycleLabError):
    """The logarithm was requested too close to -Id, where the branch is ambiguous."""


class PrecisionOverflow(CocycleLabError):
    """An integer multiplier is too large for the configured fixed-point precision."""


class InsufficientPrecision(CocycleLabError):
    """A continued-fraction quantity cannot be used at the configured precision."""


class RationalAlpha(CocycleLabError):
    """The base rotation is rational, so it fails the Diophantine gate."""

    exit_code = 3

    def __init__(self, k, message=None):
        self.k = k
        super().__init__(message or f"k*alpha is an integer for k = {k}")


class NoValidTau(CocycleLabError):
    exit_code = 3

    def __init__(self, level, message=None):
        self.level = level
        super().__init__(message or f"no tau adjustment restores the margin at level {level}")


class NoDominantMode(CocycleLabError):
    exit_code = 3


class FastPathUnavailable(CocycleLabError):
    exit_code = 3


class ConfigInvalid(CocycleLabError):
    exit_code = 2

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
