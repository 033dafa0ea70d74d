import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from caplab.domain import DomainSpec2D, build_grid
from caplab.errors import InapplicableError
from caplab.fields import GridField
from caplab.instances import monotone_strip, solve_instance
from caplab.operators import mean_curvature
from caplab.splitting import (critical_set, detect_splitting, geometry_fields, glue_check,
                              reconstruct_profile, shoot_mismatch)

MC = mean_curvature()
SQUARE = DomainSpec2D.rectangle(0, 1, 0, 1)


def _field(fn, h=1 / 32, spec=SQUARE):
    return GridField.from_function(build_grid(spec, h), fn, MC)


def test_geometry_fields_strip(strip64):
    h = strip64.grid.h
    II2, T2 = geometry_fields(strip64)
    assert np.nanmax(II2) <= h * h and np.nanmax(T2) <= h * h
    assert np.nanmin(II2) >= 0 and np.nanmin(T2) >= 0


def test_geometry_fields_cap(cap64):
    # level sets are circles of radius r
    II2, T2 = geometry_fields(cap64)
    X, Y = cap64.grid.lattice_coords()
    r = np.hypot(X, Y)
    ok = np.isfinite(II2) & (r > 0.2)
    assert np.max(np.abs(II2[ok] * r[ok] ** 2 - 1)) <= 0.05
    assert np.nanmax(T2) <= 1e-2


def test_geometry_fields_affine():
    II2, T2 = geometry_fields(_field(lambda x, y: 0.3 * x - y))
    assert np.nanmax(II2) <= 1e-20 and np.nanmax(T2) <= 1e-20


def test_detect_splitting_strip(strip64):
    rep = detect_splitting(strip64)
    assert rep.is_1d
    assert abs(rep.direction[0]) >= math.cos(1e-3)
    assert rep.mismatch <= 1e-4 and rep.shoot_mismatch <= 1e-4
    assert rep.to_dict()["is_1d"] is True


def test_detect_splitting_cap(cap32):
    rep = detect_splitting(cap32)
    assert not rep.is_1d
    assert rep.sup_II2 > 1


def test_noisy_1d_field_sensitivity():
    for h in (1 / 32, 1 / 64):
        a = 100 * h * h
        fld = _field(lambda x, y: np.sin(x) + 2 * x + a * np.sin(2 * np.pi * y), h)
        assert not detect_splitting(fld).is_1d
        assert detect_splitting(fld, tol=1e4 * h * h).is_1d


@given(st.floats(0.5, 3.0), st.floats(-1.0, 1.0))
def test_rotation_by_90_degrees(slope, curv):
    f = lambda s: slope * s + curv * s * s / 2 + 0.1 * np.sin(3 * s)
    a = detect_splitting(_field(lambda x, y: f(x)))
    b = detect_splitting(_field(lambda x, y: f(y)))
    assert a.is_1d and b.is_1d
    # the rotation (x, y) -> (y, -x) maps e1 to e2
    rot = np.array([[0.0, -1.0], [1.0, 0.0]]) @ a.direction
    assert np.max(np.abs(rot - b.direction)) <= 1e-6


@given(st.floats(0.5, 3.0), st.floats(-2.0, 2.0))
def test_exact_1d_mismatch_vanishes(slope, c):
    rep = detect_splitting(_field(lambda x, y: slope * x + c * np.sin(x) ** 2))
    assert 0.0 <= rep.mismatch <= 1e-12


def test_reconstruct_and_shoot(strip64):
    prof = reconstruct_profile(strip64, (1.0, 0.0))
    assert prof.t[0] == pytest.approx(0.0) and prof.t[-1] == pytest.approx(1.0)
    mis, sol = shoot_mismatch(prof, strip64.profile, strip64.source)
    assert mis <= 1e-4
    assert sol.termination == "SpanExhausted"
    with pytest.raises(InapplicableError):
        reconstruct_profile(_field(lambda x, y: x, 1 / 2), (1.0, 0.0))


@pytest.fixture(scope="module")
def mono64():
    # at h = 1/32 the threshold 10 h exceeds the minimum slope 0.3
    return solve_instance(monotone_strip(), 1 / 64)


def test_critical_set_monotone_strip(mono64):
    cs = critical_set(mono64)
    assert cs.n_nodes == 0 and cs.n_components == 1
    assert not cs.disconnecting


def test_critical_set_slab(slab128):
    h = slab128.grid.h
    cs = critical_set(slab128)
    assert cs.n_components == 2 and cs.disconnecting
    assert cs.residual <= 5 * h
    assert cs.collinear(h)
    assert abs(cs.line_point[0] - 0.5) <= h


def test_critical_set_cap(cap32):
    cs = critical_set(cap32)
    assert cs.n_clusters == 1 and cs.n_components == 1
    assert np.hypot(*cs.centroids[0]) <= cap32.grid.h


def test_glue_symmetric_slab(slab128):
    rep = glue_check(slab128)
    assert rep.verdict
    assert rep.details["u_min"] == pytest.approx(1.5, abs=1e-4)


def test_glue_monotone_strip_inapplicable(mono64):
    with pytest.raises(InapplicableError, match="disconnecting"):
        glue_check(mono64)


def test_glue_cap_inapplicable(cap32):
    with pytest.raises(InapplicableError, match="strip or slab"):
        glue_check(cap32)


def test_glue_asymmetric_negative_control(slab128):
    # a right half that no longer solves the ODE: still 1D, still glued at the same line
    x = slab128.grid.points[:, 0]
    vals = slab128.values + 0.05 * np.clip(x - 0.5, 0, None) ** 2
    fld = GridField(slab128.grid, vals, slab128.profile, slab128.source)
    rep = glue_check(fld)
    assert rep.clauses["a"] and rep.clauses["b"] and rep.clauses["c"]
    assert not rep.clauses["d"]
    assert not rep.verdict
