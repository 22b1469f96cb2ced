"""Exception types shared across the package."""


class PairspinError(Exception):
    """Base class for all package-specific failures."""


class NonConvergenceError(PairspinError):
    """A self-consistent solve exhausted its iteration budget.

    Carries the last residual norm so callers can judge how close it got.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepRejectedError(PairspinError):
    """Spin norms drifted beyond tolerance during integration (dt too large)."""


class SizeExceededError(PairspinError):
    """The dense master-equation oracle was asked for more sites than it supports."""


class NoPeakError(PairspinError):
    """No oscillation peak stands out of the spectrum (phase I/II trace)."""


class NoRootError(PairspinError):
    """A boundary equation has no solution on the requested branch."""


class PoleHitError(PairspinError):
    """Spectral parameter landed on (or too near) a pole of the Lax vector."""


class DegenerateRootsError(PairspinError):
    """Isolated-root identification was ambiguous at the configured tolerance."""

    def __init__(self, message, cluster=None):
        super().__init__(message)
        self.cluster = cluster
