"""Paper-level studies: weak/W1 convergence rates, invariant-measure
approximation, moment stability, blow-up contrast, W1 contraction, and
semigroup gradients via the first-variation (BEL) representation."""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    BurnInTooShort,
    ConfigError,
    DegenerateInput,
    DivergenceInReference,
)
from .measure import (
    w1_with_stderr,
    wasserstein1_matching,
    wasserstein1_sliced,
    wasserstein1_sorted,
)
from .noise import NoisePlan
from .schemes import make_scheme
from .simulate import (
    run_levels,
    simulate_ensemble,
    simulate_first_variation_ensemble,
)

_ESTIMATORS = {
    "sorted": wasserstein1_sorted,
    "matching": wasserstein1_matching,
    "sliced": wasserstein1_sliced,
}


def fit_log_rate(taus, errors, model="logtau"):
    """OLS slope of log error against log tau (model "logtau") or against
    log(tau * |ln tau|) (model "logtau_logcorrected").

    Returns (slope, intercept, residual) with residual the RMS of the
    regression residuals."""
    taus = np.asarray(taus, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if taus.size < 3:
        raise DegenerateInput("need at least 3 (tau, error) pairs")
    if taus.size != errors.size:
        raise DegenerateInput("taus and errors must have equal length")
    if np.any(errors <= 0.0):
        raise DegenerateInput("errors must be strictly positive")
    if np.any(taus <= 0.0) or np.any(taus >= 1.0):
        raise DegenerateInput("taus must lie in (0, 1)")
    if model == "logtau":
        x = np.log(taus)
    elif model == "logtau_logcorrected":
        x = np.log(taus * np.abs(np.log(taus)))
    else:
        raise ConfigError(f"unknown rate model {model!r}")
    y = np.log(errors)
    A = np.column_stack([x, np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return (float(coef[0]), float(coef[1]),
            float(np.sqrt(np.mean(resid ** 2))))


@dataclass(frozen=True)
class ConvergenceStudyConfig:
    problem: object
    scheme_kind: str
    x0: object
    T: float
    taus: tuple
    M: int
    ref_refinement: int
    w1_estimator: str = "sorted"
    seed: int = 0

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        object.__setattr__(self, "taus", taus)
        if list(taus) != sorted(taus, reverse=True):
            raise ConfigError("taus must be in descending order")
        if len(set(taus)) != len(taus):
            raise ConfigError("taus must be distinct")
        tau_max = self.problem.constants.tau_max
        for t in taus:
            if not (0.0 < t < tau_max):
                raise ConfigError(f"tau {t} outside (0, tau_max={tau_max})")
            n = self.T / t
            if abs(n - round(n)) > 1e-9:
                raise ConfigError(f"tau {t} does not divide T = {self.T}")
        if self.ref_refinement < 1:
            raise ConfigError("ref_refinement must be >= 1")
        if self.w1_estimator not in _ESTIMATORS:
            raise ConfigError(f"unknown W1 estimator {self.w1_estimator!r}")

    @property
    def tau_ref(self):
        return min(self.taus) / self.ref_refinement


@dataclass
class ConvergenceReport:
    taus: list
    errors: list
    stderrs: list
    n_effective: list
    slope_logtau: Optional[float]
    slope_loglog: Optional[float]
    intercept_logtau: Optional[float]
    intercept_loglog: Optional[float]
    residual_logtau: Optional[float]
    residual_loglog: Optional[float]
    preferred_model: Optional[str]
    degenerate: bool = False
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "taus": list(self.taus),
            "errors": list(self.errors),
            "stderrs": list(self.stderrs),
            "n_effective": list(self.n_effective),
            "slope_logtau": self.slope_logtau,
            "slope_loglog": self.slope_loglog,
            "intercept_logtau": self.intercept_logtau,
            "intercept_loglog": self.intercept_loglog,
            "residual_logtau": self.residual_logtau,
            "residual_loglog": self.residual_loglog,
            "preferred_model": self.preferred_model,
            "degenerate": self.degenerate,
            "meta": self.meta,
        }


def _fit_both(taus, errors, report):
    if any(e <= 0.0 for e in errors):
        report.degenerate = True
        return report
    s1, i1, r1 = fit_log_rate(taus, errors, "logtau")
    s2, i2, r2 = fit_log_rate(taus, errors, "logtau_logcorrected")
    report.slope_logtau, report.intercept_logtau = s1, i1
    report.residual_logtau = r1
    report.slope_loglog, report.intercept_loglog = s2, i2
    report.residual_loglog = r2
    report.preferred_model = ("logtau" if r1 <= r2
                              else "logtau_logcorrected")
    return report


def weak_error_study(cfg, workers=1):
    """W1 error at horizon T of each step size against a fine reference
    driven by the same Brownian family, with both rate fits.

    All levels and the reference advance in one coupled pass."""
    tau_ref = cfg.tau_ref
    n_fine = int(round(cfg.T / tau_ref))
    refs = [int(round(t / tau_ref)) for t in cfg.taus] + [1]
    for r, t in zip(refs, list(cfg.taus) + [tau_ref]):
        if abs(r * tau_ref - t) > 1e-12 * t or (r & (r - 1)) != 0:
            raise ConfigError(
                "taus must be power-of-two multiples of tau_ref")
    scheme = make_scheme(cfg.scheme_kind, cfg.problem)
    plan = NoisePlan(cfg.seed, cfg.problem.m, tau_ref, 1, n_fine)
    ens, _ = run_levels(cfg.problem, scheme, cfg.x0, tau_ref, refs,
                        n_fine, plan, cfg.M, workers=workers)
    ref = ens[-1]
    if ref.n_diverged > 0:
        raise DivergenceInReference(
            f"{ref.n_diverged} reference trajectories diverged; the "
            "configuration is unsound")
    errors, ses, neff = [], [], []
    for e in ens[:-1]:
        # rows are coupled lane-by-lane with the reference; keep the
        # alignment (joint finite mask) and bootstrap pairs
        mask = e.diverged < 0
        fin = e.samples[mask]
        ref_fin = ref.samples[mask]
        w1, se = w1_with_stderr(fin, ref_fin, seed=cfg.seed, paired=True)
        if cfg.w1_estimator != "sliced":
            w1 = _ESTIMATORS[cfg.w1_estimator](fin, ref_fin)
        errors.append(w1)
        ses.append(se)
        neff.append(int(np.count_nonzero(mask)))
    rep = ConvergenceReport(
        taus=list(cfg.taus), errors=errors, stderrs=ses,
        n_effective=neff, slope_logtau=None, slope_loglog=None,
        intercept_logtau=None, intercept_loglog=None,
        residual_logtau=None, residual_loglog=None, preferred_model=None,
        meta={"problem": cfg.problem.name, "scheme": cfg.scheme_kind,
              "T": cfg.T, "M": cfg.M, "tau_ref": tau_ref,
              "seed": cfg.seed, "estimator": cfg.w1_estimator})
    return _fit_both(cfg.taus, errors, rep)


@dataclass
class ErgodicityReport:
    burn_in: int
    taus: list
    errors: list
    stderrs: list
    lags: list
    contraction: list
    contraction_stderrs: list
    lambda_hat: Optional[float]
    degenerate: bool = False
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "burn_in": self.burn_in,
            "taus": list(self.taus),
            "errors": list(self.errors),
            "stderrs": list(self.stderrs),
            "lags": list(self.lags),
            "contraction": list(self.contraction),
            "contraction_stderrs": list(self.contraction_stderrs),
            "lambda_hat": self.lambda_hat,
            "degenerate": self.degenerate,
            "meta": self.meta,
        }


def invariant_measure_study(cfg, N_long, workers=1,
                            time_average_check=False):
    """Invariant-measure error of each step size against the tau_ref
    stationary ensemble, sharing one Brownian family.

    Every level runs to the common horizon N_long * min(taus); the
    mid-run snapshot supplies the stationarity (burn-in) check.  With
    time_average_check, the finest level's law is also estimated by
    time-averaging a single long trajectory and compared."""
    K4 = cfg.problem.constants.K4
    tau_min = min(cfg.taus)
    if N_long * tau_min < 10.0 / K4:
        raise ConfigError(
            f"N_long*min(taus) = {N_long * tau_min:.3g} < 10/K4 = "
            f"{10.0 / K4:.3g}; horizon too short for stationarity")
    tau_ref = cfg.tau_ref
    n_fine = int(round(N_long * tau_min / tau_ref))
    refs = [int(round(t / tau_ref)) for t in cfg.taus] + [1]
    # snap at half the horizon, aligned to the coarsest level
    r_max = max(refs)
    snap = (n_fine // 2 // r_max) * r_max
    scheme = make_scheme(cfg.scheme_kind, cfg.problem)
    plan = NoisePlan(cfg.seed, cfg.problem.m, tau_ref, 1, n_fine)
    ens, snaps = run_levels(cfg.problem, scheme, cfg.x0, tau_ref, refs,
                            n_fine, plan, cfg.M, workers=workers,
                            snap_step=snap)
    ref = ens[-1]
    if ref.n_diverged > 0:
        raise DivergenceInReference(
            f"{ref.n_diverged} reference trajectories diverged")
    # burn-in check on the reference level: the half-horizon ensemble
    # must already match the terminal one within noise.
    fin_mask = ref.diverged < 0
    half = snaps[-1][fin_mask]
    full = ref.finite_samples()
    w1_half, se_half = w1_with_stderr(half, full, seed=cfg.seed,
                                      paired=True)
    # Same-law W1 between finite clouds is positively biased at the same
    # order as its SE, so the stationarity test compares against a
    # split-half null baseline of the terminal ensemble (conservative:
    # the halves are smaller, hence more biased).
    mid = full.shape[0] // 2
    null_w1 = wasserstein1_sliced(full[:mid], full[mid:2 * mid])
    if w1_half > null_w1 + 3.0 * max(se_half, 1e-300):
        raise BurnInTooShort(
            f"W1 between half- and full-horizon ensembles = {w1_half:.3g} "
            f"exceeds same-law baseline {null_w1:.3g} + 3 x SE = "
            f"{3 * se_half:.3g}")
    errors, ses = [], []
    for e in ens[:-1]:
        mask = (e.diverged < 0) & fin_mask
        fin = e.samples[mask]
        ref_pair = ref.samples[mask]
        w1, se = w1_with_stderr(fin, ref_pair, seed=cfg.seed,
                                paired=True)
        errors.append(w1)
        ses.append(se)
    meta = {"problem": cfg.problem.name, "scheme": cfg.scheme_kind,
            "N_long": N_long, "M": cfg.M, "tau_ref": tau_ref,
            "seed": cfg.seed, "burn_in_w1": w1_half,
            "burn_in_se": se_half}
    if time_average_check:
        meta["time_average"] = _time_average_check(
            cfg, scheme, tau_min, N_long, full)
    lam = None
    if all(e > 0 for e in errors) and len(errors) >= 3:
        lam, _, _ = fit_log_rate(cfg.taus, errors, "logtau_logcorrected")
    return ErgodicityReport(
        burn_in=snap, taus=list(cfg.taus), errors=errors, stderrs=ses,
        lags=[], contraction=[], contraction_stderrs=[],
        lambda_hat=lam, meta=meta)


def _time_average_check(cfg, scheme, tau, N_long, ref_samples):
    """Cross-check: time average of one long finest-level trajectory vs
    the ensemble estimate, compared through E|X| with combined SEs."""
    prob = cfg.problem
    y = np.zeros((1, prob.d))
    plan = NoisePlan(cfg.seed + 1, prob.m, tau, 1, 2 * N_long)
    path = _record_path(prob, scheme, y, tau, 2 * N_long, plan)
    burn = N_long // 2
    samples = path[burn:]
    ta_mean = float(np.linalg.norm(samples, axis=1).mean())
    # effective sample size from lag-1 autocorrelation of |X|
    r = np.linalg.norm(samples, axis=1)
    rc = r - r.mean()
    denom = float(np.dot(rc, rc))
    rho = float(np.dot(rc[:-1], rc[1:]) / denom) if denom > 0 else 0.0
    rho = min(max(rho, 0.0), 0.999)
    n_eff = max(1.0, r.size * (1 - rho) / (1 + rho))
    ta_se = float(r.std(ddof=1) / math.sqrt(n_eff))
    ens_r = np.linalg.norm(ref_samples, axis=1)
    ens_mean = float(ens_r.mean())
    ens_se = float(ens_r.std(ddof=1) / math.sqrt(ens_r.size))
    return {"time_average": ta_mean, "time_average_se": ta_se,
            "ensemble": ens_mean, "ensemble_se": ens_se,
            "agree_3se": bool(abs(ta_mean - ens_mean)
                              <= 3.0 * (ta_se + ens_se))}


def _record_path(problem, scheme, y0, tau, n_steps, plan):
    """One trajectory recorded at every step (generic path)."""
    from .simulate import _level_step
    from .noise import fine_gaussians
    y = y0.copy()
    div = np.full(1, -1, dtype=np.int64)
    out = np.empty((n_steps, problem.d))
    sq = math.sqrt(tau)
    block = 4096
    traj = np.zeros(1, dtype=np.uint64)
    for lo in range(0, n_steps, block):
        hi = min(lo + block, n_steps)
        z = fine_gaussians(NoisePlan(plan.seed, problem.m, tau, 1, n_steps),
                           traj, lo, hi)
        for n in range(lo, hi):
            _level_step(problem, scheme, y, z[:, n - lo, :] * sq, tau,
                        div, n + 1)
            out[n] = y[0]
    return out


@dataclass
class MomentStabilityReport:
    orders: list
    sup_moments: dict
    initial_moments: dict
    diverged_fraction: float
    recursion_violations: int
    recursion_checks: int
    c_hat: float
    moments_along_path: dict
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "orders": list(self.orders),
            "sup_moments": self.sup_moments,
            "initial_moments": self.initial_moments,
            "diverged_fraction": self.diverged_fraction,
            "recursion_violations": self.recursion_violations,
            "recursion_checks": self.recursion_checks,
            "c_hat": self.c_hat,
            "meta": self.meta,
        }


def moment_stability_study(problem, scheme_kind, x0, tau, N, M,
                           orders=(2, 4), seed=0, workers=1,
                           record_every=1):
    """Tracks empirical E|Y_n|^q along the chain and checks the one-step
    dissipativity surrogate: above the fitted threshold 8*c_hat/K4, the
    next moment must not exceed (1 - K4*tau/8)*current plus slack, at
    99% bootstrap confidence."""
    tau_max = problem.constants.tau_max
    if not (0.0 < tau < tau_max):
        raise ConfigError(f"tau {tau} outside (0, tau_max={tau_max})")
    scheme = make_scheme(scheme_kind, problem)
    K4 = problem.constants.K4
    plan = NoisePlan(seed, problem.m, tau, 1, N)
    traj = _moment_paths(problem, scheme, x0, tau, N, M, plan,
                         orders, record_every, workers)
    moments, ses, diverged_frac = traj
    q_max = max(orders)
    m = np.asarray(moments[q_max])
    se = np.asarray(ses[q_max])
    # fitted additive constant of the recursion surrogate
    incr = m[1:] - (1.0 - K4 * tau / 4.0) * m[:-1]
    c_hat = float(max(0.0, np.median(np.maximum(incr, 0.0)) / tau))
    thr = 8.0 * c_hat / K4
    z99 = 2.5758293035489004
    above = m[:-1] > thr
    slack = c_hat * tau + z99 * se[1:]
    viol = int(np.count_nonzero(
        above & (m[1:] > (1.0 - K4 * tau / 8.0) * m[:-1] + slack)))
    sup_m = {q: float(np.max(moments[q])) for q in orders}
    init_m = {q: float(moments[q][0]) for q in orders}
    return MomentStabilityReport(
        orders=list(orders), sup_moments=sup_m, initial_moments=init_m,
        diverged_fraction=diverged_frac,
        recursion_violations=viol, recursion_checks=int(above.sum()),
        c_hat=c_hat,
        moments_along_path={q: list(map(float, moments[q]))
                            for q in orders},
        meta={"problem": problem.name, "scheme": scheme_kind, "tau": tau,
              "N": N, "M": M, "seed": seed,
              "record_every": record_every})


def _moment_paths(problem, scheme, x0, tau, N, M, plan, orders,
                  record_every, workers):
    """Empirical moments of |Y_n| recorded along the chain (generic
    vectorized path; diverged lanes excluded from later records)."""
    from .noise import fine_gaussians
    from .simulate import _initial_states, _level_step
    y = _initial_states(x0, problem.d, M, plan.seed ^ 0x5EED0)
    div = np.full(M, -1, dtype=np.int64)
    n_rec = N // record_every + 1
    moments = {q: np.empty(n_rec) for q in orders}
    ses = {q: np.empty(n_rec) for q in orders}
    traj_ids = np.arange(M, dtype=np.uint64)
    sq = math.sqrt(tau)

    def record(k):
        alive = div < 0
        r = np.linalg.norm(y[alive], axis=1)
        for q in orders:
            rq = r ** q
            moments[q][k] = rq.mean() if rq.size else math.inf
            ses[q][k] = (rq.std(ddof=1) / math.sqrt(rq.size)
                         if rq.size > 1 else math.inf)

    record(0)
    block = 64
    for lo in range(0, N, block):
        hi = min(lo + block, N)
        z = fine_gaussians(plan, traj_ids, lo, hi)
        for n in range(lo, hi):
            _level_step(problem, scheme, y, z[:, n - lo, :] * sq, tau,
                        div, n + 1)
            if (n + 1) % record_every == 0:
                record((n + 1) // record_every)
    return moments, ses, float(np.count_nonzero(div >= 0) / M)


@dataclass
class BlowupReport:
    diverged_fraction: dict
    sup_moment2: dict
    sup_moment4: dict
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "diverged_fraction": self.diverged_fraction,
            "sup_moment2": self.sup_moment2,
            "sup_moment4": self.sup_moment4,
            "meta": self.meta,
        }


def blowup_study(problem, x0, tau, N, M, seed=0, workers=1):
    """EM vs TEM vs PEM side by side from a large initial condition:
    diverged fractions and running 2nd/4th moments (finite lanes)."""
    if problem.gamma <= 1.0:
        raise ConfigError("blow-up contrast requires gamma > 1")
    plan = NoisePlan(seed, problem.m, tau, 1, N)
    frac, sup2, sup4 = {}, {}, {}
    for kind in ("em", "tem", "pem"):
        scheme = make_scheme(kind, problem)
        rep = _moment_paths(problem, scheme, x0, tau, N, M, plan,
                            (2, 4), max(1, N // 50), workers)
        moments, _, dfrac = rep
        frac[kind] = dfrac
        fin2 = [v for v in moments[2] if math.isfinite(v)]
        fin4 = [v for v in moments[4] if math.isfinite(v)]
        sup2[kind] = float(max(fin2)) if fin2 else math.inf
        sup4[kind] = float(max(fin4)) if fin4 else math.inf
    return BlowupReport(
        diverged_fraction=frac, sup_moment2=sup2, sup_moment4=sup4,
        meta={"problem": problem.name, "tau": tau, "N": N, "M": M,
              "seed": seed})


def contraction_study(problem, scheme_kind, x0_a, x0_b, tau, T_list, M,
                      seed=0, workers=1):
    """W1 between two ensembles started at x0_a and x0_b (same Brownian
    family) at each horizon in T_list, with a log-linear decay fit."""
    x0_a = np.atleast_1d(np.asarray(x0_a, dtype=np.float64))
    x0_b = np.atleast_1d(np.asarray(x0_b, dtype=np.float64))
    if np.array_equal(x0_a, x0_b):
        raise ConfigError("x0_a and x0_b must differ")
    if len(T_list) < 4:
        raise ConfigError("need at least 4 horizons for the decay fit")
    scheme = make_scheme(scheme_kind, problem)
    w1s, ses = [], []
    for T in T_list:
        n = int(round(T / tau))
        plan = NoisePlan(seed, problem.m, tau, 1, n)
        ea = simulate_ensemble(problem, scheme, x0_a, tau, T, M, plan,
                               workers=workers)
        eb = simulate_ensemble(problem, scheme, x0_b, tau, T, M, plan,
                               workers=workers)
        mask = (ea.diverged < 0) & (eb.diverged < 0)
        fa, fb = ea.samples[mask], eb.samples[mask]
        w1, se = w1_with_stderr(fa, fb, seed=seed, paired=True)
        w1s.append(w1)
        ses.append(se)
    lam = None
    if all(w > 0 for w in w1s):
        A = np.column_stack([np.asarray(T_list, dtype=np.float64),
                             np.ones(len(T_list))])
        coef, _, _, _ = np.linalg.lstsq(A, np.log(w1s), rcond=None)
        lam = float(-coef[0])
    return ErgodicityReport(
        burn_in=0, taus=[tau], errors=[], stderrs=[],
        lags=list(T_list), contraction=w1s, contraction_stderrs=ses,
        lambda_hat=lam,
        meta={"problem": problem.name, "scheme": scheme_kind,
              "x0_a": list(map(float, x0_a)),
              "x0_b": list(map(float, x0_b)), "tau": tau, "M": M,
              "seed": seed})


def bel_gradient(problem, phi, t, x, v, M, tau, seed=0):
    """Estimates the directional derivative <D(P_t phi)(x), v> through
    the first-variation representation: (1/t) E[accum * phi(X_t)]."""
    if t <= 0.0:
        raise ConfigError("t must be positive")
    n = t / tau
    if abs(n - round(n)) > 1e-9:
        raise ConfigError("t/tau must be an integer")
    plan = NoisePlan(seed, problem.m, tau, 1, int(round(n)))
    xT, _, accum = simulate_first_variation_ensemble(
        problem, x, v, tau, t, plan, M=M)
    vals = accum * np.asarray(phi(xT), dtype=np.float64).reshape(-1) / t
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(M))
    return est, se
