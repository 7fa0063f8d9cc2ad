import numpy as np
import pytest

from memsde import (
    AssumptionConstants,
    check_coercivity,
    check_ellipticity,
    check_monotonicity,
    check_scheme_conditions,
    make_builtin,
    make_scheme,
)
from memsde.errors import CoercivityViolated, UnknownProblem
from memsde.problems import drift_jacobian_max_error


def test_double_well_pointwise_values():
    p = make_builtin("double_well", {"c": 0.25, "lambda0": 0.5, "d": 1})
    assert p.drift(np.array([0.0])) == pytest.approx(0.0)
    assert p.diffusion(np.array([0.0]))[0, 0, 0] == pytest.approx(0.5)
    # b(x) = x - x^3 evaluated by hand at x = 2: 2 - 8 = -6
    assert p.drift(np.array([2.0]))[0, 0] == pytest.approx(-6.0)


def test_ou_pointwise_values():
    p = make_builtin("ornstein_uhlenbeck",
                     {"theta": 1.0, "sigma": 1.0, "d": 1})
    assert p.drift(np.array([2.0]))[0, 0] == pytest.approx(-2.0)
    assert p.diffusion(np.array([3.0]))[0, 0, 0] == pytest.approx(1.0)


def test_ginzburg_landau_shape():
    p = make_builtin("ginzburg_landau_3d")
    assert p.d == 3 and p.m == 3
    x = np.array([[1.0, -1.0, 0.5]])
    assert p.drift(x).shape == (1, 3)
    assert p.diffusion(x).shape == (1, 3, 3)


def test_unknown_problem():
    with pytest.raises(UnknownProblem):
        make_builtin("not_a_problem")


def test_monotonicity_zero_violations_double_well():
    # dense grid + sampled ball: (x-y)(b(x)-b(y)) + 3(sig(x)-sig(y))^2
    # <= L1 (x-y)^2 with L1 = 1 + (2p*-1)c
    p = make_builtin("double_well")
    rep = check_monotonicity(p, n_points=2000, radius=10.0, seed=3)
    assert rep.n_violations == 0
    assert p.constants.L1 == pytest.approx(1.0 + 3.0 * 0.25)


def test_monotonicity_grid_oracle():
    # independent dense 1-D double-grid oracle over [-10, 10]
    p = make_builtin("double_well")
    g = np.linspace(-10.0, 10.0, 201)
    x, y = np.meshgrid(g, g)
    x, y = x.ravel(), y.ravel()
    b = lambda t: t - t ** 3
    s = lambda t: np.sqrt(0.25 + 0.25 * t * t)
    lhs = (x - y) * (b(x) - b(y)) + 1.5 * (s(x) - s(y)) ** 2
    assert np.all(lhs <= p.constants.L1 * (x - y) ** 2 + 1e-9)


def test_coercivity_zero_violations_and_origin_margin():
    p = make_builtin("double_well")
    rep = check_coercivity(p, n_points=2000, radius=10.0, seed=7)
    assert rep.n_violations == 0
    # at the origin the margin is L2 - p*(2p*-1)/2 * lambda0^2 > 0
    c = p.constants
    assert c.L2 - 3.0 * c.lambda0 ** 2 > 0.0
    # independent dense grid oracle
    g = np.linspace(-10.0, 10.0, 4001)
    lhs = g * (g - g ** 3) + 3.0 * (0.25 + 0.25 * g * g)
    assert np.all(lhs <= c.L2 - c.L3 * np.abs(g) ** 4 + 1e-9)


def test_coercivity_violated_for_undersized_L2():
    # L2 = 2 is too small: sup of the coercivity lhs is 2.28125
    cst = AssumptionConstants(
        L1=1.75, L2=2.0, L3=0.5, p_star=2.0, lambda0=0.5, K1=1.0,
        K2=0.25, r0=2.0, K3=4.5, K4=1.0, K5=0.5, K6=0.5, alpha3=0.0)
    with pytest.raises(CoercivityViolated):
        make_builtin("double_well", constants=cst)


def test_ellipticity_lower_bound():
    p = make_builtin("double_well")
    rep = check_ellipticity(p, n_points=1000, radius=10.0, seed=1)
    assert rep.n_violations == 0
    # worst margin attained near the origin: lambda0^2 - lambda0^2 = 0
    assert rep.worst_margin >= 0.0


def test_drift_jacobian_matches_finite_differences():
    for name in ("double_well", "ornstein_uhlenbeck", "ginzburg_landau_3d"):
        p = make_builtin(name)
        assert drift_jacobian_max_error(p, n_points=50, radius=2.0) < 1e-4


@pytest.mark.parametrize("kind", ["tem", "pem"])
def test_scheme_conditions_zero_violations(kind):
    p = make_builtin("double_well")
    s = make_scheme(kind, p)
    reps = check_scheme_conditions(p, s, 0.01, n_points=2000, radius=10.0,
                                   seed=5)
    ids = [r.assumption_id for r in reps]
    assert ids == ["A4", "A5_mon_star", "A5_s_tau"]
    for r in reps:
        assert r.n_violations == 0, (kind, r.assumption_id, r.worst_margin)


def test_scheme_exponents_declared():
    p = make_builtin("double_well")
    tem = make_scheme("tem", p)
    assert (tem.alpha1, tem.alpha2, tem.alpha3) == (11.0, 2.0, 0.0)
    pem = make_scheme("pem", p)
    assert (pem.alpha1, pem.alpha2, pem.alpha3) == (1.0, 13.0, 1.0)


def test_tau_max():
    p = make_builtin("double_well")
    assert p.constants.tau_max == pytest.approx(min(1.0 / p.constants.K4,
                                                    1.0))
