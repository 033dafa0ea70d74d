import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import CubicSpline

from caplab.domain import DomainSpec2D, build_grid
from caplab.errors import InapplicableError, NonConvergenceError, RegimeError
from caplab.fields import GridField
from caplab.instances import cap_exact, serrin_cap, solve_instance, strip_capillary
from caplab.operators import mean_curvature, p_laplacian
from caplab.profile import shoot
from caplab.solver import (flux_balance, gradient_bound_check, neumann_trace, quadrature_weights,
                           radial_solve, residual, residual_vector, solve_dirichlet)
from caplab.sources import capillary, constant, custom

MC = mean_curvature()


def test_affine_is_exact():
    g = build_grid(DomainSpec2D.rectangle(0, 1, 0, 1, data=lambda x, y: x), 1 / 16)
    fld = solve_dirichlet(MC, constant(0.0), g)
    assert np.max(np.abs(fld.values - g.points[:, 0])) <= 1e-12
    rep = gradient_bound_check(fld)
    assert rep.sup_interior == pytest.approx(1.0, abs=1e-9)
    assert rep.sup_boundary == pytest.approx(1.0, abs=1e-9)
    assert rep.verdict


def test_cap_solution_second_order(cap32, cap64):
    errs = []
    for fld in (cap32, cap64):
        x, y = fld.grid.points.T
        errs.append(np.max(np.abs(fld.values - cap_exact(x, y))))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_strip_matches_profile(strip_inst, strip32, strip64):
    sol = shoot(strip_inst.profile, strip_inst.source, strip_inst.notes["u0"], 0.0, (0.0, 1.0), 1e-4)
    ref = CubicSpline(sol.t, sol.u)
    errs = [np.max(np.abs(f.values - ref(f.grid.points[:, 0]))) for f in (strip32, strip64)]
    assert errs[1] <= 1e-4
    # the 1D profile on a uniform x-grid is reproduced to rounding or at second order
    assert errs[1] <= errs[0] / 3.5 or errs[1] <= 1e-10


def test_recorded_residual_matches(cap32, strip32):
    for fld in (cap32, strip32):
        assert abs(fld.metadata["residual"] - residual(fld)) <= 1e-14
        assert fld.metadata["residual"] <= 1e-10


def test_injected_cap_residual():
    near, deep = [], []
    hs = (1 / 32, 1 / 64, 1 / 128)
    for h in hs:
        g = build_grid(DomainSpec2D.disk(1.0, (0.0, 0.0), math.sqrt(3)), h)
        fld = GridField.from_function(g, lambda x, y: cap_exact(x, y), MC, constant(1.0))
        R = np.abs(residual_vector(fld))
        r = np.hypot(*g.points[: g.n_interior].T)
        deep.append(R[r < 1 - 2 * h].max())
        near.append(R.max())
    # second order away from the cut cells, first order next to them
    assert all(4 * 0.9 <= a / b <= 4 * 1.1 for a, b in zip(deep, deep[1:]))
    assert all(n <= 0.05 * h for n, h in zip(near, hs))


def test_random_field_residual_is_large():
    g = build_grid(DomainSpec2D.disk(1.0), 1 / 32)
    rng = np.random.default_rng(7)
    assert residual(GridField(g, rng.normal(size=g.n_points), MC, constant(1.0))) > 1.0


def test_neumann_trace_cap(cap64):
    tr = neumann_trace(cap64)[1]
    assert tr.mean == pytest.approx(1 / math.sqrt(3), abs=5 * cap64.grid.h ** 2)
    assert tr.max_dev <= 10 * cap64.grid.h ** 2


def test_neumann_trace_strip(strip64):
    tr = neumann_trace(strip64)
    assert tr[1].max_dev <= 1e-8 and tr[2].max_dev <= 1e-8
    assert abs(tr[1].mean) <= 5 * strip64.grid.h ** 2
    assert tr[2].mean == pytest.approx(-0.4, abs=5 * strip64.grid.h ** 2)


def test_neumann_trace_generic_rectangle():
    g = build_grid(DomainSpec2D.rectangle(0, 1, 0, 1, data=lambda x, y: x * x + y), 1 / 16)
    fld = solve_dirichlet(MC, constant(0.5), g)
    assert neumann_trace(fld)[1].max_dev > 0.1


def test_truncation_does_not_change_traces(strip32):
    wide = solve_instance(strip_capillary(y_extent=(-1.0, 1.0)), 1 / 32)
    t0, t1 = neumann_trace(strip32), neumann_trace(wide)
    assert all(abs(t0[k].mean - t1[k].mean) < 1e-6 for k in (1, 2))


def test_flux_balance_second_order():
    diffs = []
    for h in (1 / 32, 1 / 64):
        fld = solve_dirichlet(MC, constant(1.0), build_grid(DomainSpec2D.disk(1.0), h))
        flux, src = flux_balance(fld)
        assert src == pytest.approx(math.pi, rel=1e-3)
        diffs.append(abs(flux - src))
        assert diffs[-1] <= 0.5 * h * h


def test_quadrature_weights_area():
    for spec, area in ((DomainSpec2D.disk(1.0), math.pi), (DomainSpec2D.annulus(0.5, 1.0), 0.75 * math.pi),
                       (DomainSpec2D.rectangle(0, 1, 0, 0.7), 0.7)):
        w = quadrature_weights(build_grid(spec, 1 / 64))
        assert w.sum() == pytest.approx(area, abs=2 / 64)


def test_comparison_principle(strip_inst, strip32):
    comps = {c.id: c.b for c in strip_inst.spec.components}
    up = strip_inst.spec.with_values({1: comps[1] + 0.05, 2: comps[2] + 0.02})
    fld = solve_dirichlet(strip_inst.profile, strip_inst.source, build_grid(up, 1 / 32))
    assert np.all(fld.values - strip32.values >= -1e-12)


def test_radial_cap_oracle():
    rp = radial_solve(MC, constant(1.0), DomainSpec2D.disk(1.0), 1 / 64)
    assert np.max(np.abs(rp.u - (np.sqrt(4 - rp.r ** 2) - math.sqrt(3)))) <= 1e-10
    assert rp.uprime[-1] == pytest.approx(-1 / math.sqrt(3), abs=1e-10)


def test_radial_constant():
    rp = radial_solve(MC, constant(0.0), DomainSpec2D.disk(1.0, (0, 0), 0.7), 1 / 32)
    assert np.all(rp.u == 0.7)


def test_radial_annulus_interior_minimum():
    spec = DomainSpec2D.annulus(0.5, 1.0, b=(1.0, 1.0))
    rp = radial_solve(MC, capillary(1.0), spec, 1 / 64)
    assert rp.interior_min
    assert 0.5 < rp.r_min < 1.0 and rp.u_min < 1.0
    fld = solve_dirichlet(MC, capillary(1.0), build_grid(spec, 1 / 32))
    r = np.hypot(*fld.grid.points.T)
    assert np.max(np.abs(fld.values - np.interp(r, rp.r, rp.u))) <= 1e-3


def test_radial_needs_radial_domain():
    with pytest.raises(InapplicableError):
        radial_solve(MC, constant(1.0), DomainSpec2D.strip(1.0), 1 / 16)


def test_gradient_bound_strip(strip64):
    rep = gradient_bound_check(strip64)
    assert rep.bound == pytest.approx(1.0)
    assert rep.verdict


def test_gradient_bound_steep_cap():
    fld = solve_instance(serrin_cap(R_s=1.05), 1 / 32)
    rep = gradient_bound_check(fld)
    assert rep.bound > 3
    assert rep.bound == rep.sup_boundary
    assert rep.verdict


def test_gradient_bound_needs_nonincreasing_source():
    g = build_grid(DomainSpec2D.disk(1.0, (0, 0), 0.1), 1 / 16)
    fld = solve_dirichlet(MC, custom("0.5*u"), g)
    with pytest.raises(InapplicableError, match="f'"):
        gradient_bound_check(fld)


def test_solver_errors():
    g = build_grid(DomainSpec2D.disk(1.0), 1 / 16)
    with pytest.raises(RegimeError):
        solve_dirichlet(p_laplacian(3.0), constant(1.0), g)
    with pytest.raises(NonConvergenceError) as exc:
        solve_dirichlet(MC, constant(1.0), g, max_iter=1)
    assert len(exc.value.history) == 2


@settings(max_examples=8)
@given(st.floats(0.0, 0.1), st.floats(0.0, 0.1))
def test_comparison_property(d1, d2):
    inst = strip_capillary()
    base = solve_instance(inst, 1 / 16)
    comps = {c.id: c.b for c in inst.spec.components}
    up = inst.spec.with_values({1: comps[1] + d1, 2: comps[2] + d2})
    fld = solve_dirichlet(inst.profile, inst.source, build_grid(up, 1 / 16))
    assert np.all(fld.values - base.values >= -1e-12)
