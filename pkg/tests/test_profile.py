import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import quad

from caplab.errors import DomainError
from caplab.operators import mean_curvature, parse_profile, p_laplacian
from caplab.profile import classify, first_integral, fit_circle, monotone_span, shoot
from caplab.sources import capillary, constant

MC = mean_curvature()


def test_shoot_line():
    sol = shoot(MC, constant(0.0), 0.0, 1.0, (0.0, 1.0), 1e-4)
    assert np.max(np.abs(sol.u - sol.t)) <= 1e-12
    assert classify(sol, MC, constant(0.0)).kind == "AffineHalfPlane"
    assert monotone_span(sol) == (0.0, 1.0)


def test_shoot_unit_arc():
    sol = shoot(MC, constant(1.0), 1.0, 0.0, (0.0, 0.9), 1e-4)
    assert np.max(np.abs(sol.u - np.sqrt(1 - sol.t ** 2))) <= 1e-6
    cl = classify(sol, MC, constant(1.0))
    assert cl.kind == "CylinderArc"
    assert cl.radius == pytest.approx(1.0, abs=1e-4)
    # f = H > 0 gives a concave cap
    assert np.all(np.diff(sol.uprime) < 0)
    assert monotone_span(sol) == (0.0, 0.0)


def test_arc_turning_point():
    # arc through (0, 0) with slope 1: centre (1/sqrt2, -1/sqrt2), top at t = 1/sqrt2
    sol = shoot(MC, constant(1.0), 0.0, 1.0, (0.0, 1.2), 1e-4)
    lo, hi = monotone_span(sol)
    assert lo == 0.0
    assert hi == pytest.approx(1 / math.sqrt(2), abs=2e-4)
    cl = classify(sol, MC, constant(1.0))
    assert cl.center == pytest.approx((1 / math.sqrt(2), -1 / math.sqrt(2)), abs=1e-8)


def _capillary_blowup_time():
    # first integral: 1/sqrt(1+p^2) = 1/sqrt2 - u^2/2, so p = inf at u^4 = 2
    q = lambda u: 1 / math.sqrt(2) - u * u / 2
    p = lambda u: math.sqrt(1 / q(u) ** 2 - 1)
    return quad(lambda u: 1 / p(u), 0.0, 2 ** 0.25, limit=200)[0]


def test_capillary_slope_one_reaches_vertical_tangent():
    src = capillary(1.0)
    sol = shoot(MC, src, 0.0, 1.0, (0.0, 2.0), 1e-4)
    assert sol.termination == "Lambda1Vanished"
    assert sol.t[-1] == pytest.approx(_capillary_blowup_time(), abs=1e-3)
    assert classify(sol, MC, src).kind == "GradientBlowup"
    # conservation holds on the part of the graph that is resolved
    ok = np.abs(sol.uprime) <= 10
    assert np.max(np.abs(sol.E[ok] - sol.E[0])) <= 1e-8


def test_capillary_profile_classified():
    src = capillary(1.0)
    sol = shoot(MC, src, 0.2, -0.1, (0.0, 2.0), 1e-4)
    assert sol.termination == "SpanExhausted"
    assert sol.drift <= 1e-8
    assert classify(sol, MC, src).kind == "CapillaryProfile"


def test_first_integral_examples():
    assert first_integral(MC, constant(0.0), 5.0, 0.0) == 0.0
    assert first_integral(MC, constant(0.0), 0.0, 1.0) == pytest.approx(1 - 1 / math.sqrt(2), rel=1e-15)
    assert first_integral(MC, capillary(2.0), 1.0, 0.0) == -1.0


def test_shoot_errors():
    with pytest.raises(ValueError):
        shoot(MC, constant(0.0), 0.0, 0.0, (0.0, 1.0), 0.0)
    prof = parse_profile("polytropic:1.4")
    with pytest.raises(DomainError):
        shoot(prof, constant(0.0), 0.0, 2.0, (0.0, 1.0), 1e-3)
    with pytest.raises(DomainError):
        shoot(p_laplacian(3.0), constant(0.0), 0.0, 1.0, (0.0, 1.0), 1e-3)


def test_classify_needs_four_nodes():
    sol = shoot(MC, constant(0.0), 0.0, 1.0, (0.0, 0.02), 0.01)
    with pytest.raises(ValueError):
        classify(sol, MC, constant(0.0))


def test_uprime_is_derivative_of_u():
    sol = shoot(MC, capillary(1.0), 0.3, 0.2, (0.0, 1.0), 1e-3)
    fd = np.gradient(sol.u, sol.t, edge_order=2)
    assert np.max(np.abs(fd - sol.uprime)) <= 1e-5


def test_fit_circle_exact():
    th = np.linspace(0.2, 0.9, 30)
    x, y = 1.5 + 2 * np.cos(th), -0.5 + 2 * np.sin(th)
    assert fit_circle(x, y) == pytest.approx((1.5, -0.5, 2.0), abs=1e-10)


# profiles whose a is smooth at 0, so RK4 keeps its order
SMOOTH = ["mean-curvature", "exponential", "polytropic:1.4"]
ALL_ODE = SMOOTH + ["pq-laplacian:2:3"]
SOURCES = [capillary(1.0), constant(0.5)]


@given(st.sampled_from(ALL_ODE), st.sampled_from(SOURCES),
       st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_drift_bound(name, src, u0, c):
    sol = shoot(parse_profile(name), src, u0, c, (0.0, 1.0), 1e-4)
    span = sol.t[-1] - sol.t[0]
    assume(sol.termination == "SpanExhausted")
    assert sol.drift <= 1e-8 * (1 + abs(sol.E[0])) * span


@given(st.sampled_from(SMOOTH), st.sampled_from(SOURCES),
       st.floats(0.15, 0.3), st.sampled_from([-1.0, 1.0]), st.floats(-0.3, 0.3))
def test_drift_fourth_order(name, src, amp, sign, c):
    prof = parse_profile(name)
    ref = shoot(prof, src, sign * amp, c, (0.0, 1.0), 1e-3)
    # resolved regime: slopes stay away from the ellipticity limit
    assume(ref.termination == "SpanExhausted")
    assume(np.max(np.abs(ref.uprime)) <= 0.7 * min(prof.t_max, 1e3))
    coarse = shoot(prof, src, sign * amp, c, (0.0, 1.0), 0.02)
    fine = shoot(prof, src, sign * amp, c, (0.0, 1.0), 0.01)
    assert 12 <= coarse.drift / fine.drift <= 20


@given(st.floats(0.2, 3.0), st.floats(-0.6, 0.6), st.floats(-0.5, 0.5))
def test_circle_identity(H, u0, c):
    src = constant(H)
    sol = shoot(MC, src, u0, c, (0.0, 0.4 / H), 1e-4)
    assume(sol.termination == "SpanExhausted")
    cl = classify(sol, MC, src)
    assert cl.kind == "CylinderArc"
    tc, uc = cl.center
    assert np.max(np.abs((sol.u - uc) ** 2 + (sol.t - tc) ** 2 - 1 / H ** 2)) <= 1e-6


@given(st.sampled_from(SMOOTH), st.sampled_from(SOURCES), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_time_reversal(name, src, u0, c):
    prof = parse_profile(name)
    fwd = shoot(prof, src, u0, c, (0.0, 0.5), 1e-3)
    bwd = shoot(prof, src, u0, -c, (0.0, -0.5), 1e-3)
    assert fwd.t.size == bwd.t.size
    assert np.max(np.abs(fwd.t + bwd.t)) <= 1e-12
    assert np.max(np.abs(fwd.u - bwd.u)) <= 1e-12
    assert np.max(np.abs(fwd.uprime + bwd.uprime)) <= 1e-12
