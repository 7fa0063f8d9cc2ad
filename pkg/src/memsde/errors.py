"""Exception types shared across the package."""


class MemSdeError(Exception):
    """Base class for all memsde errors."""


class UnknownProblem(MemSdeError):
    pass


class MissingParam(MemSdeError):
    pass


class CoercivityViolated(MemSdeError):
    """Sampled coercivity check failed at problem construction."""


class NonFiniteEvaluation(MemSdeError):
    """Drift/diffusion returned NaN or Inf at a sampled point."""


class ConfigError(MemSdeError):
    pass


class OutOfStep(MemSdeError):
    """Within-step time offset outside [0, tau]."""


class SingularDiffusion(MemSdeError):
    """Diffusion matrix not invertible within conditioning tolerance."""


class DimensionMismatch(MemSdeError):
    pass


class UnequalCounts(MemSdeError):
    pass


class TooLarge(MemSdeError):
    """Exact matching requested beyond its sample-count budget."""


class EmptyAfterExclusion(MemSdeError):
    """No finite samples left after excluding diverged trajectories."""


class DegenerateInput(MemSdeError):
    """Rate fit received zero or negative errors."""


class DivergenceInReference(MemSdeError):
    """The fine reference ensemble contains diverged trajectories."""


class BurnInTooShort(MemSdeError):
    """Stationarity check failed: distribution still drifting at burn-in end."""
