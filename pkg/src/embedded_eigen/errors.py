"""Exception types shared across modules."""


class EmbeddedEigenError(Exception):
    """Base class."""


class NonGeneric(EmbeddedEigenError):
    """Parameters fall on the excluded algebraic set (several representations, or f = 0)."""


class NotInSpSetminus(EmbeddedEigenError):
    """The energy is not a new resonance of order p."""


class Infeasible(EmbeddedEigenError):
    """The amplitude constraint has no positive solution."""


class StepFailure(EmbeddedEigenError):
    """Adaptive integration could not proceed (step underflow or phase jump)."""


class NonConvergence(EmbeddedEigenError):
    """The locked phase did not settle within tolerance."""


class BracketFailure(EmbeddedEigenError):
    """No sign change of the shooting residual on the initial circle mesh."""


class WindowTooShort(EmbeddedEigenError):
    """A fit window spans fewer decades than required."""


class NotFound(EmbeddedEigenError):
    """No square-integrable solution at the requested energy."""

    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit
