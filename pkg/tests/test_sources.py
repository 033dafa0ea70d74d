import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from caplab.errors import ConfigError
from caplab.sources import (adaptive_simpson, capillary, check_halfplane_condition,
                            compile_expression, constant, custom, parse_source)


def test_halfplane_zero_source():
    for c in (0.0, 1.0, 7.0):
        assert check_halfplane_condition(constant(0.0), c).passed


def test_halfplane_capillary():
    rep = check_halfplane_condition(capillary(1.0), 2.0)
    assert rep.passed
    assert rep.threshold == pytest.approx(1 / math.sqrt(5) - 1)
    assert rep.verdict_kind == "sampled"


def test_halfplane_constant_fails():
    rep = check_halfplane_condition(constant(1.0), 1.0, (0.0, 1.0))
    assert not rep.passed
    assert rep.F_max == pytest.approx(1.0)


def test_capillary_closed_forms():
    s = capillary(3.0)
    u = np.linspace(-2, 2, 9)
    assert np.allclose(s.f(u), -3 * u)
    assert np.allclose(s.f_prime(u), -3.0)
    assert np.allclose(s.F(u), -1.5 * u * u)
    assert np.all(s.F(u) <= 0)


def test_parse_source():
    assert parse_source("const:2").kind == "ConstantH"
    assert parse_source("capillary:0.5").params["kappa"] == 0.5
    assert parse_source("u^2 - sin(u)").kind == "Custom"
    with pytest.raises(ConfigError):
        parse_source("const:abc")
    with pytest.raises(ConfigError):
        parse_source("u +* 2")
    with pytest.raises(ConfigError):
        parse_source("v + 1")


def test_expression_derivative():
    g, dg = compile_expression("exp(u) * cos(u) + u^3 / 2")
    u = np.linspace(-1, 1, 11)
    assert np.allclose(g(u), np.exp(u) * np.cos(u) + u ** 3 / 2)
    assert np.allclose(dg(u), np.exp(u) * (np.cos(u) - np.sin(u)) + 1.5 * u ** 2)


def test_adaptive_simpson_against_scipy():
    g = lambda s: math.exp(math.sin(3 * s))
    assert adaptive_simpson(g, -1.0, 2.0) == pytest.approx(quad(g, -1.0, 2.0)[0], abs=1e-9)


def test_custom_primitive_against_quadrature():
    src = custom("exp(u) - 2*cos(3*u)")
    t = np.linspace(-10, 10, 41)
    ref = np.array([quad(lambda s: math.exp(s) - 2 * math.cos(3 * s), 0, tk, epsabs=1e-13)[0] for tk in t])
    assert np.max(np.abs(src.F(t) - ref) / np.maximum(1, np.abs(ref))) <= 1e-8


SOURCES = st.sampled_from([constant(1.5), capillary(2.0), custom("u^3 - u"), custom("sin(u)")])


@given(SOURCES)
def test_primitive_vanishes_at_zero(src):
    assert src.F(0.0) == 0.0


@given(st.floats(-20, 20), st.floats(-20, 20), st.sampled_from([constant(0.0), capillary(1.0), constant(-0.3), custom("u^3")]))
def test_halfplane_monotone_in_slope(c, c2, src):
    lo, hi = sorted([abs(c), abs(c2)])
    small = check_halfplane_condition(src, lo, (-10, 10), 500).passed
    large = check_halfplane_condition(src, -hi, (-10, 10), 500).passed
    assert not small or large
