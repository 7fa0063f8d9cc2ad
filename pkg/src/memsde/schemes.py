"""One-step maps of the modified Euler family (EM, TEM, PEM, custom),
plus the continuous within-step interpolation.

Update rule: Y_{n+1} = P(Y_n) + b_tau(P(Y_n)) tau + sum_j sigma_j,tau(P(Y_n)) dW_j
with modification map P and step-size-dependent coefficients.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, NonFiniteEvaluation, OutOfStep

# States at or above this norm count as diverged; chosen so that no
# intermediate power (|x|^8 for gamma=3 taming) can overflow a double.
DIVERGENCE_THRESHOLD = 1e37


def _batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x.reshape(1, -1), True) if x.ndim == 1 else (x, False)


def taming_denominator(x, tau, gamma):
    """(1 + tau |x|^(4(gamma-1)))^(1/4), overflow-safe for large |x|."""
    e = 4.0 * (gamma - 1.0)
    r = np.linalg.norm(x, axis=-1)
    with np.errstate(over="ignore"):
        pw = r ** e
        den = np.sqrt(np.sqrt(1.0 + tau * pw))
    big = ~np.isfinite(den)
    if np.any(big):
        # log-space: (tau r^e)^(1/4), the +1 is negligible at this scale
        den = np.where(big,
                       np.exp(0.25 * (np.log(tau) +
                                      e * np.log(np.where(big, r, 1.0)))),
                       den)
    return den


def tame_drift(p, x, tau):
    """Drift divided by the taming denominator; |output| <= |b(x)|."""
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must lie in (0,1)")
    xb, single = _batch(x)
    b = p.drift(xb)
    if not np.all(np.isfinite(b)):
        raise NonFiniteEvaluation("drift returned NaN/Inf")
    out = b / taming_denominator(xb, tau, p.gamma)[:, None]
    return out[0] if single else out


def tame_diffusion(p, x, tau):
    """Diffusion columns divided by the same scalar taming denominator."""
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must lie in (0,1)")
    xb, single = _batch(x)
    s = p.diffusion(xb)
    if not np.all(np.isfinite(s)):
        raise NonFiniteEvaluation("diffusion returned NaN/Inf")
    out = s / taming_denominator(xb, tau, p.gamma)[:, None, None]
    return out[0] if single else out


def project(x, tau, gamma):
    """Radial projection onto the ball of radius tau^(-1/(2 gamma))."""
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must lie in (0,1)")
    if gamma <= 1.0:
        raise ValueError("gamma must be > 1")
    xb, single = _batch(x)
    r = np.linalg.norm(xb, axis=-1)
    radius = tau ** (-1.0 / (2.0 * gamma))
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(r > 0.0, np.minimum(1.0, radius / r), 0.0)
    out = xb * factor[:, None]
    # the rounded product can exceed the ball by an ulp; the norm bound
    # is contractive, so a rescale pass restores it exactly
    for _ in range(3):
        rn = np.linalg.norm(out, axis=-1)
        over = rn > radius
        if not np.any(over):
            break
        out[over] *= (radius / rn[over])[:, None]
    return out[0] if single else out


@dataclass(frozen=True)
class SchemeSpec:
    """A member of the modified Euler family.

    modification: P, batched (n,d) -> (n,d).
    modified_drift: b_tau(x, tau), batched; applied to already-modified points.
    modified_diffusion: sigma_tau(x, tau), batched (n,d) -> (n,d,m).
    """

    kind: str  # "em" | "tem" | "pem" | "custom"
    # P(x, tau); tau-dependent because the projection radius scales with
    # tau^(-1/(2 gamma)).  Identity (in x) for EM/TEM.
    modification: Callable
    modified_drift: Callable
    modified_diffusion: Callable
    alpha1: float
    alpha2: float
    alpha3: float

    def __post_init__(self):
        if self.kind not in ("em", "tem", "pem", "custom"):
            raise ConfigError(f"unknown scheme kind {self.kind!r}")
        if self.alpha1 < 1.0 or self.alpha2 < 2.0 or self.alpha3 >= 2.0:
            raise ValueError("scheme exponents out of range")


def make_scheme(kind, problem, modification=None, modified_drift=None,
                modified_diffusion=None, alphas=None):
    """Build the scheme for a problem.  For "custom", all three callables
    and the exponent triple must be supplied; validate them with
    problems.check_scheme_conditions before long runs."""
    g = problem.gamma

    def identity(x, tau):
        return np.asarray(x, dtype=np.float64)

    if kind == "em":
        return SchemeSpec("em", identity,
                          lambda x, tau: problem.drift(x),
                          lambda x, tau: problem.diffusion(x),
                          alpha1=1.0, alpha2=2.0, alpha3=1.0)
    if kind == "tem":
        return SchemeSpec("tem", identity,
                          lambda x, tau: tame_drift(problem, x, tau),
                          lambda x, tau: tame_diffusion(problem, x, tau),
                          alpha1=5.0 * g - 4.0, alpha2=2.0, alpha3=3.0 - g)
    if kind == "pem":
        return SchemeSpec("pem", lambda x, tau: project(x, tau, g),
                          lambda x, tau: problem.drift(x),
                          lambda x, tau: problem.diffusion(x),
                          alpha1=1.0, alpha2=4.0 * g + 1.0, alpha3=1.0)
    if kind == "custom":
        if not (modification and modified_drift and modified_diffusion
                and alphas):
            raise ConfigError("custom scheme requires callables and alphas")
        return SchemeSpec("custom", modification, modified_drift,
                          modified_diffusion, *alphas)
    raise ConfigError(f"unknown scheme kind {kind!r}")


@dataclass(frozen=True)
class StepState:
    """Iterate Y_n at time t = n * tau (always computed from n, never
    accumulated)."""

    y: np.ndarray
    n: int
    t: float
    diverged: bool = False


def mem_step(p, s, state, dW, tau):
    """One step of the modified Euler method.  Non-finite results are
    flagged on the returned state, not raised (EM blow-up is a legal
    outcome that gets recorded)."""
    if not (0.0 < tau < p.constants.tau_max):
        raise ValueError(f"tau must lie in (0, {p.constants.tau_max})")
    y = np.asarray(state.y, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    z = s.modification(y.reshape(1, -1), tau)
    with np.errstate(over="ignore", invalid="ignore"):
        drift = s.modified_drift(z, tau)
        diff = s.modified_diffusion(z, tau)
        y_new = (z + drift * tau + np.einsum("ijk,k->ij", diff, dW))[0]
    bad = (not np.all(np.isfinite(y_new))
           or np.linalg.norm(y_new) >= DIVERGENCE_THRESHOLD)
    n_new = state.n + 1
    return StepState(y=y_new, n=n_new, t=n_new * tau,
                     diverged=state.diverged or bad)


def interpolate_step(p, s, state, w_path_increment, dt_within, tau):
    """Continuous interpolation within [t_n, t_n + tau]:
    P(Y_n) + b_tau(P(Y_n)) dt + sum_j sigma_j,tau(P(Y_n)) (W_s - W_tn)_j.

    At (tau, delta W_n) this equals the mem_step output bitwise.
    """
    if not (0.0 <= dt_within <= tau):
        raise OutOfStep(f"dt_within={dt_within} outside [0, {tau}]")
    y = np.asarray(state.y, dtype=np.float64)
    w = np.asarray(w_path_increment, dtype=np.float64)
    z = s.modification(y.reshape(1, -1), tau)
    drift = s.modified_drift(z, tau)
    diff = s.modified_diffusion(z, tau)
    return (z + drift * dt_within + np.einsum("ijk,k->ij", diff, w))[0]
