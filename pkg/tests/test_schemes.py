import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memsde import (
    interpolate_step,
    make_builtin,
    make_scheme,
    mem_step,
    project,
    tame_diffusion,
    tame_drift,
)
from memsde.errors import ConfigError, OutOfStep
from memsde.schemes import StepState, taming_denominator


@pytest.fixture(scope="module")
def dw():
    return make_builtin("double_well", {"c": 0.25, "lambda0": 0.5, "d": 1})


def mp_denominator(x, tau, gamma):
    """High-precision oracle for (1 + tau |x|^(4(gamma-1)))^(1/4)."""
    with mpmath.workdps(50):
        r = mpmath.mpf(abs(float(x)))
        val = (1 + mpmath.mpf(tau) * r ** (4 * (gamma - 1))) ** mpmath.mpf(
            "0.25")
        return float(val)


def test_tame_drift_example(dw):
    # gamma=3, tau=0.01, x=2: b(2) = -6, denominator = 3.56^0.25
    out = tame_drift(dw, np.array([2.0]), 0.01)
    assert out[0] == pytest.approx(-6.0 / 3.56 ** 0.25, rel=1e-12)
    assert out[0] == pytest.approx(-4.36806, rel=1e-4)


def test_tame_diffusion_example(dw):
    out = tame_diffusion(dw, np.array([2.0]), 0.01)
    assert out[0, 0] == pytest.approx(np.sqrt(1.25) / 3.56 ** 0.25,
                                      rel=1e-12)
    assert out[0, 0] == pytest.approx(0.81394, rel=1e-4)


def test_taming_denominator_high_precision_oracle(dw):
    rng = np.random.default_rng(0)
    xs = rng.uniform(-50.0, 50.0, size=200)
    for tau in (0.5, 0.01, 2.0 ** -9):
        den = taming_denominator(xs.reshape(-1, 1), tau, 3.0)
        for x, d in zip(xs, den):
            assert d == pytest.approx(mp_denominator(x, tau, 3.0),
                                      rel=1e-12)


def test_taming_denominator_overflow_branch():
    # |x|^8 overflows double for |x| ~ 1e40; the log-space branch covers it
    big = np.array([[1e60]])
    d = taming_denominator(big, 0.01, 3.0)
    with mpmath.workdps(60):
        want = float((1 + mpmath.mpf("0.01") * mpmath.mpf("1e60") ** 8)
                     ** mpmath.mpf("0.25"))
    assert np.isfinite(d[0])
    assert d[0] == pytest.approx(want, rel=1e-10)


def test_project_formula_and_bounds():
    rng = np.random.default_rng(1)
    xs = rng.uniform(-30.0, 30.0, size=(500, 1))
    for tau in (0.5, 0.01):
        radius = tau ** (-1.0 / 6.0)
        px = project(xs, tau, 3.0)
        norms = np.abs(px[:, 0])
        assert np.all(norms <= np.minimum(np.abs(xs[:, 0]), radius)
                      + 1e-15)
        inside = np.abs(xs[:, 0]) <= radius
        assert np.array_equal(px[inside], xs[inside])
        outside = ~inside
        assert np.allclose(np.abs(px[outside, 0]), radius, rtol=1e-14)
    assert project(np.array([0.0]), 0.01, 3.0)[0] == 0.0


@given(st.floats(-1e6, 1e6), st.floats(1e-6, 0.99))
@settings(max_examples=200, deadline=None)
def test_projection_norm_never_increases(x, tau):
    px = project(np.array([x]), tau, 3.0)
    assert abs(px[0]) <= min(abs(x), tau ** (-1.0 / 6.0)) * (1 + 1e-15)


@given(st.floats(-1e8, 1e8), st.floats(1e-6, 0.99))
@settings(max_examples=200, deadline=None)
def test_taming_denominator_at_least_one(x, tau):
    d = taming_denominator(np.array([[x]]), tau, 3.0)
    assert d[0] >= 1.0


def test_mem_step_tem_example(dw):
    s = make_scheme("tem", dw)
    state = StepState(y=np.array([2.0]), n=0, t=0.0)
    out = mem_step(dw, s, state, np.array([0.05]), 0.01)
    want = (2.0 - 6.0 / 3.56 ** 0.25 * 0.01
            + np.sqrt(1.25) / 3.56 ** 0.25 * 0.05)
    assert out.y[0] == pytest.approx(want, rel=1e-12)
    assert out.y[0] == pytest.approx(1.99702, abs=5e-5)
    assert out.n == 1 and out.t == pytest.approx(0.01)
    assert not out.diverged


def test_mem_step_flags_divergence_instead_of_raising(dw):
    s = make_scheme("em", dw)
    state = StepState(y=np.array([1e13]), n=0, t=0.0)
    out = mem_step(dw, s, state, np.array([0.0]), 0.5)
    assert out.diverged


def test_interpolation_endpoint_matches_step_bitwise(dw):
    for kind in ("em", "tem", "pem"):
        s = make_scheme(kind, dw)
        state = StepState(y=np.array([1.3]), n=2, t=0.02)
        dW = np.array([-0.07])
        full = mem_step(dw, s, state, dW, 0.01)
        interp = interpolate_step(dw, s, state, dW, 0.01, 0.01)
        assert np.array_equal(full.y, interp)


def test_interpolation_midpoint_and_origin(dw):
    s = make_scheme("tem", dw)
    state = StepState(y=np.array([1.3]), n=0, t=0.0)
    at0 = interpolate_step(dw, s, state, np.array([0.0]), 0.0, 0.01)
    assert at0[0] == pytest.approx(1.3)
    with pytest.raises(OutOfStep):
        interpolate_step(dw, s, state, np.array([0.0]), 0.02, 0.01)
    with pytest.raises(OutOfStep):
        interpolate_step(dw, s, state, np.array([0.0]), -0.001, 0.01)


def test_custom_scheme_requires_all_pieces(dw):
    with pytest.raises(ConfigError):
        make_scheme("custom", dw)
    s = make_scheme(
        "custom", dw,
        modification=lambda x, tau: x,
        modified_drift=lambda x, tau: dw.drift(x),
        modified_diffusion=lambda x, tau: dw.diffusion(x),
        alphas=(1.0, 2.0, 1.0))
    assert s.kind == "custom"


def test_pem_step_projects_before_euler(dw):
    s = make_scheme("pem", dw)
    tau = 0.5
    radius = tau ** (-1.0 / 6.0)
    state = StepState(y=np.array([100.0]), n=0, t=0.0)
    out = mem_step(dw, s, state, np.array([0.0]), tau)
    want = radius + (radius - radius ** 3) * tau
    assert out.y[0] == pytest.approx(want, rel=1e-12)
