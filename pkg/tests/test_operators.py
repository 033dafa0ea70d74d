import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from caplab.errors import ConfigError, DomainError
from caplab.operators import (REGISTRY_HELP, check_mean_curvature_type, check_regularity_class,
                              custom, eval_lambda, exponential, mean_curvature, p_laplacian,
                              parse_profile, polytropic, pq_laplacian)

BUILTINS = ["mean-curvature", "p-laplacian:3", "pq-laplacian:3:4", "exponential", "polytropic:1.4"]


def test_eval_lambda_mean_curvature_origin():
    assert eval_lambda(mean_curvature(), 0.0) == (1.0, 1.0)


def test_eval_lambda_mean_curvature_sqrt3():
    lam1, lam2 = eval_lambda(mean_curvature(), math.sqrt(3))
    # closed form lambda1 = (1 + t^2)^(-3/2), lambda2 = (1 + t^2)^(-1/2)
    assert lam1 == pytest.approx(1 / 8, rel=1e-14)
    assert lam2 == pytest.approx(1 / 2, rel=1e-14)


def test_eval_lambda_p_laplacian():
    # a(t) = t, (t a)' = 2 t
    lam1, lam2 = eval_lambda(p_laplacian(3.0), 2.0)
    assert (lam1, lam2) == pytest.approx((4.0, 2.0), rel=1e-14)


def test_eval_lambda_outside_validity():
    prof = polytropic(1.4)
    with pytest.raises(DomainError, match="0"):
        eval_lambda(prof, prof.t_max)
    with pytest.raises(DomainError):
        eval_lambda(mean_curvature(), -1.0)


def test_polytropic_t_max():
    for gamma in (1.2, 1.4, 2.0):
        assert polytropic(gamma).t_max == pytest.approx(math.sqrt(2 / (gamma + 1)), rel=1e-15)


def test_regularity_mean_curvature():
    rep = check_regularity_class(mean_curvature(), np.linspace(0, 10, 512))
    assert rep.klass == "ASuperStrong"


def test_regularity_pq_below_three():
    rep = check_regularity_class(pq_laplacian(2.0, 2.5), np.linspace(0, 10, 512))
    assert rep.klass == "A"
    assert not rep.holds["AStrong"]


def test_regularity_polytropic():
    prof = polytropic(1.4)
    rep = check_regularity_class(prof, np.linspace(0, 0.99 * prof.t_max, 512))
    assert rep.klass == "ASuperStrong"
    with pytest.raises(DomainError):
        check_regularity_class(prof, [0.1, prof.t_max])


def test_regularity_empty_samples():
    with pytest.raises(ValueError):
        check_regularity_class(mean_curvature(), [])


def test_mean_curvature_type_examples():
    t = np.geomspace(1e-6, 100, 2000)
    assert check_mean_curvature_type(mean_curvature(), 1, 1, t).passed
    rep = check_mean_curvature_type(p_laplacian(3.0), 10, 10, t)
    assert not rep.passed
    # t^2 lambda1 / (C1 lambda2) = 2 t^2 / 10 at t = 100
    assert rep.ratio_curvature == pytest.approx(2000.0, rel=1e-12)
    assert not check_mean_curvature_type(mean_curvature(), 1e-12, 1, [0.5]).passed


def test_parse_profile_names():
    for name in BUILTINS:
        assert parse_profile(name).name == name
    with pytest.raises(ConfigError):
        parse_profile("no-such-profile")
    with pytest.raises(ConfigError):
        parse_profile("p-laplacian")


def test_registry_help_mentions_subsonic_limit():
    assert "sqrt(2/(gamma+1))" in REGISTRY_HELP["polytropic:<gamma>"]


def _sample(prof):
    hi = 5.0 if math.isinf(prof.t_max) else 0.95 * prof.t_max
    return np.linspace(1e-3, hi, 200)


@pytest.mark.parametrize("name", BUILTINS)
def test_analytic_derivative_matches_finite_difference(name):
    prof = parse_profile(name)
    t = _sample(prof)
    step = 1e-5
    ta = lambda s: s * prof.a(s)
    fd = (ta(t + step) - ta(t - step)) / (2 * step)
    lam1, _ = eval_lambda(prof, t)
    # relative to the size of (t a)' since exponential grows like exp(t^2)
    assert np.max(np.abs(lam1 - fd) / np.maximum(1.0, np.abs(lam1))) <= 1e-8


@pytest.mark.parametrize("name", ["mean-curvature", "exponential", "polytropic:1.4", "pq-laplacian:3:4"])
def test_lambda_max_t2_vanishes_at_zero(name):
    prof = parse_profile(name)
    k = np.arange(4, 30)
    t = 2.0 ** -k
    lam1, lam2 = eval_lambda(prof, t)
    v = np.maximum(lam1, lam2) * t ** 2
    assert np.all(np.diff(v) < 0)
    assert v[-1] < 1e-15


@pytest.mark.parametrize("name", BUILTINS)
def test_builtin_invariants(name):
    prof = parse_profile(name)
    t = _sample(prof)
    lam1, lam2 = eval_lambda(prof, t)
    assert np.all(lam2 > 0) and np.all(lam1 > 0)
    if prof.regularity_class != "A" and prof.a(0.0) > 0:
        assert eval_lambda(prof, 0.0) == (prof.a(0.0), prof.a(0.0))


def test_energy_density_closed_forms_match_quadrature():
    from caplab.operators import _quad_G
    s = np.array([0.0, 1e-3, 0.3, 1.0, 2.5])
    for prof in (mean_curvature(), exponential(), p_laplacian(3.0)):
        assert np.allclose(prof.energy_density(s), _quad_G(prof, s), rtol=1e-9, atol=1e-14)


def test_custom_profile_numeric_derivative():
    prof = custom(lambda t: 1 / np.sqrt(1 + t * t))
    t = np.linspace(0.1, 3, 30)
    lam1, lam2 = eval_lambda(prof, t)
    assert np.allclose(lam1, (1 + t * t) ** -1.5, rtol=1e-8)


@given(st.floats(1e-3, 50.0))
def test_mean_curvature_type_margin(t):
    # t^2 (1+t^2)^(-3/2) <= (1+t^2)^(-1/2) and (1+t^2)^(-1/2) <= 1/t
    rep = check_mean_curvature_type(mean_curvature(), 1.0, 1.0, [t])
    assert rep.passed
    assert rep.ratio_curvature == pytest.approx(t * t / (1 + t * t), rel=1e-12)


@given(st.floats(0.1, 100.0), st.floats(0.1, 100.0))
def test_mean_curvature_type_monotone_in_constants(c1, c2):
    t = np.geomspace(1e-3, 100, 200)
    prof = p_laplacian(3.0)
    small = check_mean_curvature_type(prof, c1, c2, t)
    big = check_mean_curvature_type(prof, 2 * c1, 2 * c2, t)
    assert big.ratio_curvature <= small.ratio_curvature
    assert big.ratio_decay <= small.ratio_decay
