"""
Exceptions raised by the toolkit.
"""
from typing import Optional


class NoiseFreeBOError(RuntimeError):
    """Base class for runtime failures inside the toolkit."""


class FactorizationFailure(NoiseFreeBOError):
    """Cholesky factorization failed at every jitter level of the ladder."""


class DuplicatePoints(NoiseFreeBOError):
    """A training point coincides with an existing one within tolerance."""


class BudgetExhausted(NoiseFreeBOError):
    """An objective was called more often than its evaluation budget allows."""


class IntegrationError(NoiseFreeBOError):
    """The ODE integrator failed (step underflow or non-finite state)."""


class SamplerError(NoiseFreeBOError):
    """A sampler could not make progress (e.g. vanishing acceptance rate)."""


class ExternalObjectiveError(NoiseFreeBOError):
    """The external objective process misbehaved or exited mid-run."""


class GPConsistencyError(NoiseFreeBOError):
    """A posterior quantity violated an internal numerical invariant."""


class ConfigError(ValueError):
    """
    Invalid experiment configuration.

    Args:
        message (str): What is wrong
        source (str, optional): Config file the value came from
        line (int, optional): Line of the offending key in that file
    """

    def __init__(self, message: str, source: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.source = source
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.source and self.line:
            return f"{self.source}:{self.line}: {self.message}"
        if self.source:
            return f"{self.source}: {self.message}"
        return self.message
