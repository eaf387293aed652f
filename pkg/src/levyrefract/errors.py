"""Exception hierarchy shared by the numerical modules and the CLI."""


class LevyRefractError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(LevyRefractError, ValueError):
    """Invalid model, cost or problem parameters."""


class PoleError(LevyRefractError, ArithmeticError):
    """The jump transform was evaluated at an eigenvalue of the sub-generator."""


class NumericalError(LevyRefractError, ArithmeticError):
    """A numerical routine failed to meet its contract."""


class RepeatedRootError(NumericalError):
    """Two roots of psi(theta) - q are too close for simple partial fractions."""


class BracketFailure(NumericalError):
    """A monotone root search could not bracket a sign change."""


class TailTruncationError(NumericalError):
    """A semi-infinite integral could not be resolved to tolerance."""


class ConfigError(LevyRefractError, ValueError):
    """A run configuration failed validation."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
