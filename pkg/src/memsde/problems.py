"""SDE problem definitions and sampled verification of their structural
assumptions (dissipativity, coercivity, ellipticity, scheme conditions).

All coefficient callables are batched: drift maps (n, d) -> (n, d),
diffusion maps (n, d) -> (n, d, m), drift_jacobian (n, d) -> (n, d, d),
diffusion_jacobians (n, d) -> (n, m, d, d).

The structural conditions are universally quantified; here they are
falsified by seeded uniform sampling in a ball plus a deterministic
axis-aligned grid, reporting worst margins (negative iff violated).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (CoercivityViolated, MissingParam, NonFiniteEvaluation,
                     UnknownProblem)


@dataclass(frozen=True)
class AssumptionConstants:
    """User-declared constants of the dissipativity, contractivity-at-
    infinity, and scheme-stability conditions."""

    L1: float
    L2: float
    L3: float
    p_star: float
    lambda0: float
    K1: float
    K2: float
    r0: float
    K3: float
    K4: float
    K5: float
    K6: float
    alpha3: float

    def __post_init__(self):
        if self.L3 <= 0.0:
            raise ValueError("L3 must be positive")
        if self.K4 <= 0.0:
            raise ValueError("K4 must be positive")
        if not (0.0 < self.lambda0 < 1.0):
            raise ValueError("lambda0 must lie in (0,1)")
        if self.alpha3 >= 2.0:
            raise ValueError("alpha3 must be < 2")
        if self.p_star < 1.0:
            raise ValueError("p_star must be >= 1")

    @property
    def tau_max(self) -> float:
        return min(1.0 / self.K4, 1.0)


@dataclass(frozen=True)
class SdeProblem:
    """An SDE dX = b(X) dt + sigma(X) dW with declared growth exponent
    gamma and assumption constants."""

    name: str
    d: int
    m: int
    drift: Callable
    diffusion: Callable
    gamma: float
    constants: AssumptionConstants
    drift_jacobian: Optional[Callable] = None
    diffusion_jacobians: Optional[Callable] = None
    params: dict = field(default_factory=dict)
    # (a1, a3, s0, s2) when the problem is 1-D with b(x) = a1*x - a3*x^3
    # and sigma(x) = sqrt(s0 + s2*x^2); enables the fused compiled kernel.
    kernel_coeffs: Optional[tuple] = None

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ValueError("d and m must be >= 1")
        if self.gamma <= 1.0:
            raise ValueError("gamma must be > 1")


def _as_batch(x, d):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, d) if d == 1 else x.reshape(1, d)
    return x


def _require(params, keys, name):
    for k in keys:
        if k not in params:
            raise MissingParam(f"problem {name!r} requires parameter {k!r}")


def _cubic_problem(name, d, a1, a3, s0_diag, s2, gamma, constants, params):
    """Elementwise drift a1*x - a3*x^3 and diagonal diffusion
    sqrt(s0 + s2*x_i^2); m = d."""

    def drift(x):
        x = _as_batch(x, d)
        return a1 * x - a3 * x ** 3

    def diffusion(x):
        x = _as_batch(x, d)
        vals = np.sqrt(s0_diag + s2 * x ** 2)
        out = np.zeros(x.shape + (d,))
        idx = np.arange(d)
        out[:, idx, idx] = vals
        return out

    def drift_jacobian(x):
        x = _as_batch(x, d)
        out = np.zeros(x.shape + (d,))
        idx = np.arange(d)
        out[:, idx, idx] = a1 - 3.0 * a3 * x ** 2
        return out

    def diffusion_jacobians(x):
        x = _as_batch(x, d)
        out = np.zeros((x.shape[0], d, d, d))
        idx = np.arange(d)
        if s2 != 0.0:
            dv = s2 * x / np.sqrt(s0_diag + s2 * x ** 2)
            out[:, idx, idx, idx] = dv
        return out

    kc = (a1, a3, s0_diag, s2) if d == 1 else None
    return SdeProblem(name=name, d=d, m=d, drift=drift, diffusion=diffusion,
                      gamma=gamma, constants=constants,
                      drift_jacobian=drift_jacobian,
                      diffusion_jacobians=diffusion_jacobians,
                      params=dict(params), kernel_coeffs=kc)


def _double_well_constants(c, lambda0, d, p_star):
    q = p_star * (2.0 * p_star - 1.0) / 2.0
    L3 = 1.0 / (2.0 * d)
    L2 = (1.0 + q * c) ** 2 * d / 2.0 + q * d * lambda0 ** 2 + 0.25
    return AssumptionConstants(
        L1=1.0 + (2.0 * p_star - 1.0) * c, L2=L2, L3=L3, p_star=p_star,
        lambda0=lambda0, K1=1.0, K2=0.25, r0=2.0,
        K3=4.5 * d, K4=1.0, K5=0.5 * d, K6=0.5 * d, alpha3=0.0)


def _ou_constants(theta, sigma, d, p_star):
    q = p_star * (2.0 * p_star - 1.0) / 2.0
    return AssumptionConstants(
        L1=0.0, L2=q * sigma ** 2 * d + 0.5, L3=0.1, p_star=p_star,
        lambda0=0.9, K1=1.0, K2=theta / 2.0, r0=1.0,
        K3=q * 2.0 * sigma ** 2 * d + 0.5, K4=min(theta, 1.0) / 2.0,
        K5=sigma ** 2 * d + 0.5, K6=0.5, alpha3=1.0)


def make_builtin(name, params=None, constants=None):
    """Construct a built-in problem; sampled coercivity is verified at
    construction (raises CoercivityViolated on failure)."""
    params = dict(params or {})
    if name == "double_well":
        c = float(params.get("c", 0.25))
        lam0 = float(params.get("lambda0", 0.5))
        d = int(params.get("d", 1))
        p_star = float(params.get("p_star", 2.0))
        cst = constants or _double_well_constants(c, lam0, d, p_star)
        eff = {"c": c, "lambda0": lam0, "d": d, "p_star": p_star}
        prob = _cubic_problem("double_well", d, 1.0, 1.0, lam0 ** 2, c,
                              3.0, cst, eff)
    elif name == "ginzburg_landau_3d":
        c = float(params.get("c", 0.25))
        lam0 = float(params.get("lambda0", 0.5))
        a = float(params.get("a", 1.0))
        b = float(params.get("b", 1.0))
        p_star = float(params.get("p_star", 2.0))
        cst = constants or _double_well_constants(c, lam0, 3, p_star)
        eff = {"c": c, "lambda0": lam0, "a": a, "b": b, "p_star": p_star}
        prob = _cubic_problem("ginzburg_landau_3d", 3, a, b, lam0 ** 2, c,
                              3.0, cst, eff)
    elif name == "ornstein_uhlenbeck":
        theta = float(params.get("theta", 1.0))
        sigma = float(params.get("sigma", 1.0))
        d = int(params.get("d", 1))
        p_star = float(params.get("p_star", 2.0))
        # gamma is nominal: linear drift has no superlinear growth, but the
        # problem type demands gamma > 1; coercivity with this gamma holds
        # on the sampled radius, not globally.
        cst = constants or _ou_constants(theta, sigma, d, p_star)
        eff = {"theta": theta, "sigma": sigma, "d": d, "p_star": p_star}
        prob = _cubic_problem("ornstein_uhlenbeck", d, -theta, 0.0,
                              sigma ** 2, 0.0, 1.5, cst, eff)
    else:
        raise UnknownProblem(f"unknown builtin problem {name!r}")

    rep = check_coercivity(prob, n_points=512, radius=10.0, seed=0)
    if rep.n_violations > 0:
        raise CoercivityViolated(
            f"builtin {name!r}: sampled coercivity check failed "
            f"(worst margin {rep.worst_margin:.3g})")
    return prob


@dataclass(frozen=True)
class SampledCheckReport:
    assumption_id: str
    n_points: int
    n_violations: int
    worst_margin: float
    sampled_radius: float
    fitted_constant: Optional[float] = None

    def as_dict(self):
        return {
            "assumption_id": self.assumption_id,
            "n_points": self.n_points,
            "n_violations": self.n_violations,
            "worst_margin": self.worst_margin,
            "sampled_radius": self.sampled_radius,
            "fitted_constant": self.fitted_constant,
        }


def _ball_samples(d, n_points, radius, seed):
    """Seeded uniform samples in the ball plus a deterministic axis grid."""
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_points, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.random(n_points) ** (1.0 / d)
    pts = dirs * radii[:, None]
    grid = np.zeros((41 * d, d))
    line = np.linspace(-radius, radius, 41)
    for j in range(d):
        grid[41 * j:41 * (j + 1), j] = line
    return np.vstack([pts, grid])


def _finite_or_raise(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEvaluation(f"{what} returned NaN/Inf at a sampled point")


def _report(assumption_id, slack, radius, fitted=None):
    slack = np.asarray(slack, dtype=np.float64)
    return SampledCheckReport(
        assumption_id=assumption_id,
        n_points=int(slack.size),
        n_violations=int(np.count_nonzero(slack < 0.0)),
        worst_margin=float(slack.min()),
        sampled_radius=float(radius),
        fitted_constant=fitted)


def check_monotonicity(p, n_points, radius, seed):
    """One-sided Lipschitz/monotonicity condition on sampled pairs:
    <x-y, b(x)-b(y)> + (2p*-1)/2 ||sigma(x)-sigma(y)||_F^2 <= L1 |x-y|^2."""
    x = _ball_samples(p.d, n_points, radius, seed)
    y = _ball_samples(p.d, n_points, radius, seed + 1)
    n = min(len(x), len(y))
    x, y = x[:n], y[:n]
    bx, by = p.drift(x), p.drift(y)
    sx, sy = p.diffusion(x), p.diffusion(y)
    _finite_or_raise(bx, "drift")
    _finite_or_raise(sx, "diffusion")
    _finite_or_raise(by, "drift")
    _finite_or_raise(sy, "diffusion")
    diff = x - y
    lhs = np.einsum("ij,ij->i", diff, bx - by)
    lhs += (2.0 * p.constants.p_star - 1.0) / 2.0 * \
        np.sum((sx - sy) ** 2, axis=(1, 2))
    slack = p.constants.L1 * np.sum(diff ** 2, axis=1) - lhs
    return _report("A1_mon", slack, radius)


def check_coercivity(p, n_points, radius, seed):
    """Coercivity on sampled points:
    <x, b(x)> + p*(2p*-1)/2 ||sigma(x)||_F^2 <= L2 - L3 |x|^(gamma+1)."""
    x = _ball_samples(p.d, n_points, radius, seed)
    bx = p.drift(x)
    sx = p.diffusion(x)
    _finite_or_raise(bx, "drift")
    _finite_or_raise(sx, "diffusion")
    ps = p.constants.p_star
    lhs = np.einsum("ij,ij->i", x, bx)
    lhs += ps * (2.0 * ps - 1.0) / 2.0 * np.sum(sx ** 2, axis=(1, 2))
    norm = np.linalg.norm(x, axis=1)
    slack = p.constants.L2 - p.constants.L3 * norm ** (p.gamma + 1.0) - lhs
    return _report("A1_coe", slack, radius)


def check_ellipticity(p, n_points, radius, seed):
    """Uniform lower ellipticity sigma sigma^T >= lambda0^2 I, checked
    via the smallest Gram eigenvalue at sampled points.  This is the
    bound the gradient representation needs (sigma stays invertible);
    superlinear diffusions have no global upper bound, so none is
    imposed here."""
    x = _ball_samples(p.d, n_points, radius, seed)
    sx = p.diffusion(x)
    _finite_or_raise(sx, "diffusion")
    gram = np.einsum("ijk,ilk->ijl", sx, sx)
    eig = np.linalg.eigvalsh(gram)
    lam0 = p.constants.lambda0
    slack = eig[:, 0] - lam0 ** 2
    return _report("A3_ellipticity", slack, radius)


def drift_jacobian_max_error(p, n_points=100, radius=1.0, seed=0, h=1e-5):
    """Max relative error of drift_jacobian vs central finite differences."""
    if p.drift_jacobian is None:
        raise ValueError("problem has no drift_jacobian")
    x = _ball_samples(p.d, n_points, radius, seed)[:n_points]
    jac = p.drift_jacobian(x)
    worst = 0.0
    for k in range(p.d):
        e = np.zeros(p.d)
        e[k] = h
        col = (p.drift(x + e) - p.drift(x - e)) / (2.0 * h)
        scale = np.maximum(np.abs(jac[:, :, k]), 1.0)
        worst = max(worst, float(np.max(np.abs(col - jac[:, :, k]) / scale)))
    return worst


def check_scheme_conditions(p, s, tau, n_points, radius, seed):
    """Sampled checks of the scheme-framework conditions at step size tau.

    Growth/consistency constants are fitted (max observed ratio) and
    reported; violations are counted only for non-finite evaluations and
    for the exact requirement |P(x)| <= |x|.  The Lyapunov-type
    inequalities use the problem's declared K3..K6 and the scheme's
    alpha3.  Returns reports for A4, A5_mon_star and A5_s_tau.
    """
    cst = p.constants
    if not (0.0 < tau < cst.tau_max):
        raise ValueError(f"tau must lie in (0, {cst.tau_max})")
    x = _ball_samples(p.d, n_points, radius, seed)
    px = s.modification(x, tau)
    b_raw_x = p.drift(x)
    b_raw_px = p.drift(px)
    s_raw_x = p.diffusion(x)
    s_raw_px = p.diffusion(px)
    b_mod = s.modified_drift(px, tau)
    s_mod = s.modified_diffusion(px, tau)
    for arr, what in ((b_mod, "modified drift"), (s_mod, "modified diffusion")):
        _finite_or_raise(arr, what)

    xn = np.linalg.norm(x, axis=1)
    pxn = np.linalg.norm(px, axis=1)

    # A4: fitted growth/consistency constants plus the exact norm bound.
    with np.errstate(divide="ignore", invalid="ignore"):
        r_b = np.abs(np.linalg.norm(b_mod, axis=1) /
                     np.linalg.norm(b_raw_x, axis=1))
        r_s = np.abs(np.linalg.norm(s_mod, axis=(1, 2)) /
                     np.linalg.norm(s_raw_x, axis=(1, 2)))
        cons = (np.linalg.norm(b_mod - b_raw_px, axis=1) +
                np.sum(np.linalg.norm(s_mod - s_raw_px, axis=1), axis=1))
        r_c = cons / (tau * (1.0 + xn ** s.alpha1))
        r_p = np.linalg.norm(px - x, axis=1) / (tau ** 2 * xn ** s.alpha2)
    fitted = float(np.nanmax([np.nanmax(r[np.isfinite(r)], initial=0.0)
                              for r in (r_b, r_s, r_c, r_p)]))
    norm_slack = xn - pxn
    a4 = _report("A4", norm_slack, radius, fitted=fitted)

    # A5 (mon*): 2<P(x),b_tau> + C(2p*,2) sum_j |sigma_j,tau|^2
    #            + tau |b_tau|^2 <= K3 - K4 |P(x)|^2
    binom = cst.p_star * (2.0 * cst.p_star - 1.0)  # C(2p*, 2) for 2p* even
    lhs = (2.0 * np.einsum("ij,ij->i", px, b_mod)
           + binom * np.sum(s_mod ** 2, axis=(1, 2))
           + tau * np.sum(b_mod ** 2, axis=1))
    a5_mon = _report("A5_mon_star", cst.K3 - cst.K4 * pxn ** 2 - lhs, radius)

    # A5 (s-tau): sqrt(tau) sum_j |sigma_j,tau|^2 <= K5 + K6 |P(x)|^alpha3
    lhs2 = np.sqrt(tau) * np.sum(s_mod ** 2, axis=(1, 2))
    a5_stau = _report("A5_s_tau",
                      cst.K5 + cst.K6 * pxn ** s.alpha3 - lhs2, radius)
    return [a4, a5_mon, a5_stau]
