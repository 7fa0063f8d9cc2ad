"""Modified Euler schemes (tamed and projected) for SDEs whose
coefficients grow superlinearly, with counter-based reproducible noise,
assumption checkers, and studies of moments, weak convergence rates,
invariant measures, contraction, and semigroup gradients."""

from ._backend import HAVE_COMPILED, backend_name
from .errors import (
    ConfigError,
    MemSdeError,
)
from .noise import NoisePlan, brownian_increments, gaussians, uniforms
from .problems import (
    AssumptionConstants,
    SdeProblem,
    check_coercivity,
    check_ellipticity,
    check_monotonicity,
    check_scheme_conditions,
    make_builtin,
)
from .schemes import (
    DIVERGENCE_THRESHOLD,
    SchemeSpec,
    StepState,
    interpolate_step,
    make_scheme,
    mem_step,
    project,
    tame_diffusion,
    tame_drift,
)
from .simulate import (
    Ensemble,
    GaussianInitial,
    ensemble_from_binary,
    ensemble_from_csv,
    ensemble_to_binary,
    ensemble_to_csv,
    run_levels,
    simulate_coupled,
    simulate_ensemble,
    simulate_first_variation,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionConstants",
    "ConfigError",
    "DIVERGENCE_THRESHOLD",
    "Ensemble",
    "GaussianInitial",
    "HAVE_COMPILED",
    "MemSdeError",
    "NoisePlan",
    "SchemeSpec",
    "SdeProblem",
    "StepState",
    "backend_name",
    "brownian_increments",
    "check_coercivity",
    "check_ellipticity",
    "check_monotonicity",
    "check_scheme_conditions",
    "ensemble_from_binary",
    "ensemble_from_csv",
    "ensemble_to_binary",
    "ensemble_to_csv",
    "gaussians",
    "interpolate_step",
    "make_builtin",
    "make_scheme",
    "mem_step",
    "project",
    "run_levels",
    "simulate_coupled",
    "simulate_ensemble",
    "simulate_first_variation",
    "tame_diffusion",
    "tame_drift",
    "uniforms",
]
