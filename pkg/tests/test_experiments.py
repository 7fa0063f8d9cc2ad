import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memsde import AssumptionConstants, SdeProblem, make_builtin
from memsde.errors import ConfigError, DegenerateInput
from memsde.experiments import (
    ConvergenceStudyConfig,
    bel_gradient,
    blowup_study,
    contraction_study,
    fit_log_rate,
    invariant_measure_study,
    moment_stability_study,
    weak_error_study,
)


def test_fit_log_rate_planted_linear():
    taus = np.array([2.0 ** -k for k in range(3, 9)])
    slope, intercept, resid = fit_log_rate(taus, 3.0 * taus, "logtau")
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert resid == pytest.approx(0.0, abs=1e-12)


def test_fit_log_rate_planted_log_corrected():
    taus = np.array([2.0 ** -k for k in range(3, 9)])
    errs = 0.7 * taus * np.abs(np.log(taus))
    slope, _, resid = fit_log_rate(taus, errs, "logtau_logcorrected")
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert resid == pytest.approx(0.0, abs=1e-12)
    slope_plain, _, _ = fit_log_rate(taus, errs, "logtau")
    assert slope_plain < 1.0


def test_fit_log_rate_planted_sqrt():
    taus = np.array([2.0 ** -k for k in range(3, 9)])
    slope, _, _ = fit_log_rate(taus, 2.0 * taus ** 0.5, "logtau")
    assert slope == pytest.approx(0.5, abs=1e-12)


@given(st.floats(0.1, 2.0), st.floats(0.25, 3.0))
@settings(max_examples=50, deadline=None)
def test_fit_log_rate_recovers_random_plants(c, q):
    taus = np.array([2.0 ** -k for k in range(2, 8)])
    slope, intercept, resid = fit_log_rate(taus, c * taus ** q, "logtau")
    assert slope == pytest.approx(q, abs=1e-10)
    assert intercept == pytest.approx(math.log(c), abs=1e-9)


def test_fit_log_rate_validations():
    with pytest.raises(DegenerateInput):
        fit_log_rate([0.1, 0.05], [1.0, 0.5])
    with pytest.raises(DegenerateInput):
        fit_log_rate([0.1, 0.05, 0.025], [1.0, 0.0, 0.5])
    with pytest.raises(ConfigError):
        fit_log_rate([0.1, 0.05, 0.025], [1.0, 0.5, 0.25], "bogus")


def _zero_problem():
    cst = AssumptionConstants(L1=1.0, L2=1.0, L3=0.5, p_star=2.0,
                              lambda0=0.5, K1=1.0, K2=1.0, r0=1.0,
                              K3=1.0, K4=1.0, K5=1.0, K6=0.5, alpha3=0.0)
    return SdeProblem(
        name="zero", d=1, m=1,
        drift=lambda x: np.zeros_like(np.atleast_2d(x)),
        diffusion=lambda x: np.zeros(np.atleast_2d(x).shape + (1,)),
        gamma=3.0, constants=cst)


def test_weak_error_study_zero_coefficients_flagged_degenerate():
    cfg = ConvergenceStudyConfig(
        problem=_zero_problem(), scheme_kind="tem", x0=np.array([1.0]),
        T=1.0, taus=(0.25, 0.125, 0.0625), M=50, ref_refinement=4)
    rep = weak_error_study(cfg)
    assert rep.degenerate
    assert rep.slope_logtau is None
    assert all(e == 0.0 for e in rep.errors)


def test_weak_error_study_config_validation():
    dw = make_builtin("double_well")
    with pytest.raises(ConfigError):
        ConvergenceStudyConfig(problem=dw, scheme_kind="tem",
                               x0=np.array([1.0]), T=1.0,
                               taus=(0.125, 0.25), M=10, ref_refinement=4)
    with pytest.raises(ConfigError):
        ConvergenceStudyConfig(problem=dw, scheme_kind="tem",
                               x0=np.array([1.0]), T=1.0,
                               taus=(0.3,), M=10, ref_refinement=4)


def test_weak_error_study_small_scale_dw():
    dw = make_builtin("double_well")
    cfg = ConvergenceStudyConfig(
        problem=dw, scheme_kind="tem", x0=np.array([1.0]), T=2.0,
        taus=tuple(2.0 ** -k for k in range(3, 7)), M=4000,
        ref_refinement=16, seed=7)
    rep = weak_error_study(cfg)
    assert all(e > 0 for e in rep.errors)
    # errors decrease with tau up to noise
    for k in range(len(rep.errors) - 1):
        assert rep.errors[k + 1] <= rep.errors[k] + 3 * (
            rep.stderrs[k] + rep.stderrs[k + 1])
    assert 0.4 < rep.slope_loglog < 1.6
    assert rep.preferred_model in ("logtau", "logtau_logcorrected")


def test_moment_stability_small():
    dw = make_builtin("double_well")
    rep = moment_stability_study(dw, "tem", np.array([5.0]), 0.1, 100,
                                 2000, orders=(2, 4), seed=1)
    assert rep.diverged_fraction == 0.0
    assert rep.sup_moments[4] <= rep.initial_moments[4]
    assert rep.recursion_violations == 0


def test_moment_stability_zero_problem_constant():
    rep = moment_stability_study(_zero_problem(), "em", np.array([2.0]),
                                 0.1, 20, 50, orders=(2,), seed=0)
    vals = rep.moments_along_path[2]
    assert all(v == pytest.approx(4.0, rel=1e-14) for v in vals)


def test_blowup_study_contrast():
    dw = make_builtin("double_well")
    rep = blowup_study(dw, np.array([10.0]), 0.5, 50, 500, seed=2)
    assert rep.diverged_fraction["em"] > 0.5
    assert rep.diverged_fraction["tem"] == 0.0
    assert rep.diverged_fraction["pem"] == 0.0


def test_blowup_study_linear_problem_all_stable():
    ou = make_builtin("ornstein_uhlenbeck")
    rep = blowup_study(ou, np.array([10.0]), 0.5, 50, 200, seed=3)
    assert all(v == 0.0 for v in rep.diverged_fraction.values())


def test_blowup_requires_superlinear():
    lin = _zero_problem()
    object.__setattr__(lin, "gamma", 1.0)
    with pytest.raises(ConfigError):
        blowup_study(lin, np.array([1.0]), 0.1, 10, 10)


def test_contraction_study_ou_rate():
    ou = make_builtin("ornstein_uhlenbeck")
    rep = contraction_study(ou, "tem", [2.0], [-2.0], 0.01,
                            [1.0, 2.0, 3.0, 4.0], 2000, seed=4)
    # synchronous coupling decays exactly at rate theta = 1
    assert 0.8 <= rep.lambda_hat <= 1.2
    for k in range(3):
        assert rep.contraction[k + 1] < rep.contraction[k]


def test_contraction_same_start_rejected():
    ou = make_builtin("ornstein_uhlenbeck")
    with pytest.raises(ConfigError):
        contraction_study(ou, "tem", [1.0], [1.0], 0.01,
                          [1.0, 2.0, 3.0, 4.0], 10)
    with pytest.raises(ConfigError):
        contraction_study(ou, "tem", [1.0], [2.0], 0.01, [1.0, 2.0], 10)


def test_invariant_measure_study_ou_small():
    ou = make_builtin("ornstein_uhlenbeck")
    cfg = ConvergenceStudyConfig(
        problem=ou, scheme_kind="tem", x0=np.array([0.0]),
        T=0.0, taus=(0.125, 0.0625), M=3000, ref_refinement=4, seed=5)
    rep = invariant_measure_study(cfg, N_long=512,
                                  time_average_check=True)
    assert len(rep.errors) == 2
    assert all(e >= 0 for e in rep.errors)
    ta = rep.meta["time_average"]
    assert ta["agree_3se"]


def test_bel_gradient_constant_phi_is_zero_mean():
    ou = make_builtin("ornstein_uhlenbeck")
    est, se = bel_gradient(ou, lambda x: np.ones(x.shape[0]), 1.0,
                           np.array([0.5]), np.array([1.0]), 2000, 0.02,
                           seed=6)
    assert abs(est) <= 3 * se


def test_bel_gradient_ou_exact():
    # <Du(t,x), v> = e^{-theta t} v for phi(x) = x
    ou = make_builtin("ornstein_uhlenbeck")
    est, se = bel_gradient(ou, lambda x: x[:, 0], 1.0, np.array([0.5]),
                           np.array([1.0]), 4000, 0.02, seed=7)
    assert est == pytest.approx(math.exp(-1.0), abs=3 * se + 0.01)
