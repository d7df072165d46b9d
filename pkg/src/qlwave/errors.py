"""Exception types shared across the package."""


class QLWaveError(Exception):
    """Base class for all package errors."""


class DomainError(QLWaveError, ValueError):
    """An input lies outside the domain where a formula is valid."""


class ConvergenceError(QLWaveError, RuntimeError):
    """An iterative solve failed to converge."""


class ConstructionError(QLWaveError, ValueError):
    """A parametrized object failed its sampled validity checks."""


class StencilError(QLWaveError, ValueError):
    """A finite-difference stencil is too small for the requested derivative."""


class SignatureError(QLWaveError, ValueError):
    """A perturbed metric is no longer Lorentzian."""


class SolverAbort(QLWaveError, RuntimeError):
    """An evolution stopped early; ``t`` records when."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class HyperbolicityLoss(SolverAbort):
    """The effective g^tt stopped being negative."""


class InstabilityDetected(SolverAbort):
    """The solution sup grew beyond the configured factor."""
