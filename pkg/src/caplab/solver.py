"""Dirichlet solver for ``div(a(|grad u|) grad u) + f(u) = 0`` on cut-cell grids.

The discretisation is conservative: fluxes ``a(g) d`` live on grid edges,
where ``d`` is the difference quotient along the edge and ``g`` the length
of the edge gradient whose transverse part is averaged from the endpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .domain import ARTIFICIAL, DIRS, DomainSpec2D, Grid, build_grid
from .errors import InapplicableError, NonConvergenceError, RegimeError
from .fields import GridField, boundary_gradient, interior_gradient
from .operators import OperatorProfile
from .sources import SourceTerm

ELLIPTIC_FLOOR = 1e-12
DAMPING_FLOOR = 2.0 ** -10


@dataclass(frozen=True, eq=False)
class EdgeOperators:
    """Sparse edge and divergence operators attached to a grid."""

    tail: np.ndarray
    head: np.ndarray
    axis: np.ndarray
    length: np.ndarray
    Dn: sp.csr_matrix
    Tt: sp.csr_matrix
    Div: sp.csr_matrix
    cell_area: np.ndarray


def _transverse_rows(grid: Grid):
    """Sparse rows of the transverse three-point derivative at each point.

    ``rows[axis]`` holds, for edges along ``axis``, the derivative across it.
    Points without both transverse arms get an empty row and ``ok = False``.
    """
    N = grid.n_points
    out = []
    for edge_axis in (0, 1):
        dp, dm = (2, 3) if edge_axis == 0 else (0, 1)
        ip, im = grid.arm_idx[:, dp], grid.arm_idx[:, dm]
        ok = (ip >= 0) & (im >= 0)
        k = np.nonzero(ok)[0]
        hp, hm = grid.arm_len[k, dp], grid.arm_len[k, dm]
        den = hp * hm * (hp + hm)
        rows = np.concatenate([k, k, k])
        cols = np.concatenate([ip[k], k, im[k]])
        vals = np.concatenate([hm ** 2 / den, (hp ** 2 - hm ** 2) / den, -hp ** 2 / den])
        out.append((sp.csr_matrix((vals, (rows, cols)), shape=(N, N)), ok))
    return out


@lru_cache(maxsize=32)
def _edges_cached(grid: Grid) -> EdgeOperators:
    return build_edges(grid)


def edge_operators(grid: Grid) -> EdgeOperators:
    return _edges_cached(grid)


def build_edges(grid: Grid) -> EdgeOperators:
    n, N = grid.n_interior, grid.n_points
    tail, head, axis, length = [], [], [], []
    edge_of = -np.ones((n, 4), dtype=int)
    for d in (0, 2):
        k = np.arange(n)
        q = grid.arm_idx[:n, d]
        base = len(tail)
        tail.extend(k)
        head.extend(q)
        axis.extend([d // 2] * n)
        length.extend(grid.arm_len[:n, d])
        edge_of[:, d] = base + np.arange(n)
        inner = q < n
        edge_of[q[inner], d + 1] = edge_of[k[inner], d]
    for d in (1, 3):
        k = np.nonzero(edge_of[:, d] < 0)[0]
        q = grid.arm_idx[k, d]
        base = len(tail)
        tail.extend(q)
        head.extend(k)
        axis.extend([d // 2] * k.size)
        length.extend(grid.arm_len[k, d])
        edge_of[k, d] = base + np.arange(k.size)
    tail = np.asarray(tail)
    head = np.asarray(head)
    axis = np.asarray(axis)
    length = np.asarray(length, dtype=float)
    E = tail.size
    e = np.arange(E)
    Dn = sp.csr_matrix((np.concatenate([-1 / length, 1 / length]),
                        (np.concatenate([e, e]), np.concatenate([tail, head]))), shape=(E, N))

    # transverse derivative on each edge: endpoint average, or a linear
    # extrapolation from the endpoint that has both transverse arms
    Tt = sp.csr_matrix((E, N))
    for ax, (Tm, ok) in zip((0, 1), _transverse_rows(grid)):
        fwd, bwd = (0, 1) if ax == 0 else (2, 3)
        sel = np.nonzero(axis == ax)[0]
        ot, oh = ok[tail[sel]], ok[head[sel]]
        rows, cols, vals = [], [], []
        both = sel[ot & oh]
        rows += [both, both]
        cols += [tail[both], head[both]]
        vals += [np.full(both.size, 0.5)] * 2
        for side, far_dir, mask in ((tail, bwd, ot & ~oh), (head, fwd, oh & ~ot)):
            es = sel[mask]
            good = side[es]
            w = grid.arm_idx[good, far_dir]
            ext = (w >= 0) & ok[np.where(w >= 0, w, 0)]
            lam = np.where(ext, 0.5 * length[es] / grid.arm_len[good, far_dir], 0.0)
            rows += [es, es[ext]]
            cols += [good, w[ext]]
            vals += [1 + lam, -lam[ext]]
        W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(E, N))
        Tt = Tt + W @ Tm
    Tt = Tt.tocsr()

    hbar_x = 0.5 * (grid.arm_len[:n, 0] + grid.arm_len[:n, 1])
    hbar_y = 0.5 * (grid.arm_len[:n, 2] + grid.arm_len[:n, 3])
    k = np.arange(n)
    rows = np.concatenate([k, k, k, k])
    cols = np.concatenate([edge_of[:, 0], edge_of[:, 1], edge_of[:, 2], edge_of[:, 3]])
    vals = np.concatenate([1 / hbar_x, -1 / hbar_x, 1 / hbar_y, -1 / hbar_y])
    Div = sp.csr_matrix((vals, (rows, cols)), shape=(n, E))
    return EdgeOperators(tail, head, axis, length, Dn, Tt, Div, hbar_x * hbar_y)


# ------------------------------------------------------------ edge physics

def edge_state(profile: OperatorProfile, ops: EdgeOperators, u):
    """Edge-normal difference, transverse derivative and gradient length."""
    d = ops.Dn @ u
    tau = ops.Tt @ u
    g = np.hypot(d, tau)
    if np.any(g >= profile.t_max):
        raise RegimeError(f"{profile.name}: edge gradient {g.max():.4g} reaches "
                          f"validity limit {profile.t_max:.4g}")
    lam1 = profile.a(g) + g * profile.a_prime(g)
    if np.any(~(lam1 >= ELLIPTIC_FLOOR)):
        raise RegimeError(f"{profile.name}: ellipticity lost (min lambda1 = {np.nanmin(lam1):.3g})")
    return d, tau, g


def _a_over_g(profile, g):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(g > 0, profile.a_prime(g) / np.where(g > 0, g, 1.0), 0.0)
    return out


def edge_tensors(profile: OperatorProfile, ops: EdgeOperators, u):
    """Edge gradients in ``(x, y)`` coordinates and the tensors ``A(grad u)``."""
    d, tau, g = edge_state(profile, ops, u)
    G = np.where(ops.axis[:, None] == 0, np.column_stack([d, tau]), np.column_stack([tau, d]))
    a = profile.a(g)
    c = _a_over_g(profile, g)
    A = c[:, None, None] * G[:, :, None] * G[:, None, :] + a[:, None, None] * np.eye(2)
    return G, A


# ----------------------------------------------------------- the system

@dataclass(frozen=True, eq=False)
class _System:
    grid: Grid
    ops: EdgeOperators
    unknown: np.ndarray
    neumann_rows: np.ndarray
    neumann_nbr: np.ndarray
    fixed_values: np.ndarray


def _inward_neighbor(grid: Grid, k: int) -> int:
    if grid.parent[k] >= 0:
        return int(grid.parent[k])
    best, arg = -2.0, -1
    for d in range(4):
        q = grid.arm_idx[k, d]
        if q >= 0 and grid.normal[k] @ DIRS[d] > best:
            best, arg = grid.normal[k] @ DIRS[d], q
    return int(arg)


def profile_extension(profile, source, spec: DomainSpec2D, y: float, xs, tol=1e-12):
    """Values at ``xs`` of the 1D solution across the slab section at height ``y``."""
    if spec.shape == "strip":
        lo, hi = 0.0, spec.params["T"]
    else:
        lo, hi = float(spec.params["phi1"](y)), float(spec.params["phi2"](y))
    ua = float(spec.component(1).value(lo, y))
    ub = float(spec.component(2).value(hi, y))
    h = xs[1] - xs[0] if len(xs) > 1 else (hi - lo) / 8
    inner = np.unique(np.round(np.asarray(xs) / h)) * h
    inner = inner[(inner > lo + 1e-9 * h) & (inner < hi - 1e-9 * h)]
    nodes = np.concatenate([[lo], inner, [hi]])
    vals = solve_profile_bvp(profile, source, nodes, ua, ub, tol=tol)
    return np.interp(xs, nodes, vals)


def _setup(profile, source, grid: Grid) -> _System:
    spec = grid.spec
    N, n = grid.n_points, grid.n_interior
    fixed = np.zeros(N)
    art = np.nonzero(grid.component == ARTIFICIAL)[0]
    for cid in spec.component_ids():
        k = np.nonzero(grid.component == cid)[0]
        fixed[k] = spec.component(cid).value(grid.points[k, 0], grid.points[k, 1])
    neumann = np.array([], dtype=int)
    if art.size and spec.shape in ("strip", "slab"):
        ys = grid.points[art, 1]
        for yv in np.unique(ys):
            sel = art[ys == yv]
            fixed[sel] = profile_extension(profile, source, spec, yv, grid.points[sel, 0])
    elif art.size:
        neumann = art
    nbr = np.array([_inward_neighbor(grid, k) for k in neumann], dtype=int)
    unknown = np.concatenate([np.arange(n), neumann])
    return _System(grid, edge_operators(grid), unknown, neumann, nbr, fixed)


def _residual_vec(profile, source, sysm: _System, u):
    ops = sysm.ops
    d, tau, g = edge_state(profile, ops, u)
    F = profile.a(g) * d
    n = sysm.grid.n_interior
    R = ops.Div @ F + source.f(u[:n])
    if sysm.neumann_rows.size:
        R = np.concatenate([R, u[sysm.neumann_rows] - u[sysm.neumann_nbr]])
    return R, (d, tau, g)


def _jacobian(profile, source, sysm: _System, u, state):
    ops = sysm.ops
    d, tau, g = state
    a = profile.a(g)
    c = _a_over_g(profile, g)
    dF = sp.diags(a + c * d * d) @ ops.Dn + sp.diags(c * d * tau) @ ops.Tt
    n = sysm.grid.n_interior
    J = ops.Div @ dF
    J = J + sp.csr_matrix((np.asarray(source.f_prime(u[:n]), dtype=float) * np.ones(n),
                           (np.arange(n), np.arange(n))), shape=J.shape)
    J = J.tocsc()[:, sysm.unknown]
    if sysm.neumann_rows.size:
        m = sysm.neumann_rows.size
        pos = {k: i for i, k in enumerate(sysm.unknown)}
        rows = np.concatenate([np.arange(m), np.arange(m)])
        cols = np.concatenate([[pos[k] for k in sysm.neumann_rows],
                               [pos[k] for k in sysm.neumann_nbr]])
        B = sp.csr_matrix((np.concatenate([np.ones(m), -np.ones(m)]), (rows, cols)),
                          shape=(m, sysm.unknown.size))
        J = sp.vstack([J, B])
    return J.tocsc()


def harmonic_extension(sysm: _System):
    """Boundary data extended by the discrete Laplacian (``A = Id``)."""
    ops = sysm.ops
    u = sysm.fixed_values.copy()
    L = (ops.Div @ ops.Dn).tocsc()
    rhs = -(L @ u)
    M = L[:, sysm.unknown]
    if sysm.neumann_rows.size:
        m = sysm.neumann_rows.size
        pos = {k: i for i, k in enumerate(sysm.unknown)}
        B = sp.csr_matrix((np.concatenate([np.ones(m), -np.ones(m)]),
                           (np.concatenate([np.arange(m)] * 2),
                            np.concatenate([[pos[k] for k in sysm.neumann_rows],
                                            [pos[k] for k in sysm.neumann_nbr]]))),
                          shape=(m, sysm.unknown.size))
        M = sp.vstack([M, B])
        rhs = np.concatenate([rhs, np.zeros(m)])
    u[sysm.unknown] = spsolve(M.tocsc(), rhs)
    return u


def solve_dirichlet(profile: OperatorProfile, source: SourceTerm, grid: Grid,
                    max_iter: int = 50, tol: float = 1e-10, damping: bool = True,
                    initial=None) -> GridField:
    """Damped Newton iteration for the discrete Dirichlet problem.

    Parameters
    ----------
    profile, source : OperatorProfile, SourceTerm
    grid : Grid
        Non-artificial components take their Dirichlet values from the
        domain spec.  Artificial sides of strips and slabs receive the 1D
        profile across the section; other artificial sides are reflecting.
    max_iter, tol : int, float
        Newton budget and sup-norm residual tolerance.
    damping : bool
        Halve the step until the residual decreases (floor ``2**-10``).

    Returns
    -------
    GridField
        Values at all points with metadata ``iterations``, ``residual`` and
        ``history``.
    """
    if profile.regularity_class == "A":
        raise RegimeError(f"{profile.name}: class-A profiles are not supported by the solver")
    sysm = _setup(profile, source, grid)
    u = harmonic_extension(sysm) if initial is None else np.asarray(initial, float).copy()
    u[np.setdiff1d(np.arange(grid.n_points), sysm.unknown)] = \
        sysm.fixed_values[np.setdiff1d(np.arange(grid.n_points), sysm.unknown)]
    R, state = _residual_vec(profile, source, sysm, u)
    history = [float(np.max(np.abs(R)))]
    it = 0
    while history[-1] > tol:
        if it >= max_iter:
            raise NonConvergenceError(
                f"solver: Newton did not converge in {max_iter} iterations "
                f"(residual {history[-1]:.3e})", history)
        J = _jacobian(profile, source, sysm, u, state)
        delta = spsolve(J, -R)
        theta = 1.0
        while True:
            trial = u.copy()
            trial[sysm.unknown] += theta * delta
            try:
                R_t, state_t = _residual_vec(profile, source, sysm, trial)
                r_t = float(np.max(np.abs(R_t)))
            except RegimeError:
                r_t = math.inf
            if r_t < history[-1] or not damping or theta <= DAMPING_FLOOR:
                break
            theta *= 0.5
        if not math.isfinite(r_t):
            raise NonConvergenceError("solver: Newton step left the elliptic regime", history)
        u, R, state = trial, R_t, state_t
        history.append(r_t)
        it += 1
    meta = {"profile": profile.name, "source": source.name, "iterations": it,
            "residual": history[-1], "history": history}
    return GridField(grid, u, profile, source, meta)


def residual_vector(fld: GridField) -> np.ndarray:
    sysm = _setup(fld.profile, fld.source, fld.grid)
    R, _ = _residual_vec(fld.profile, fld.source, sysm, fld.values)
    return R[: fld.grid.n_interior]


def residual(fld: GridField) -> float:
    """Sup norm of the discrete ``Delta_a u + f(u)`` over interior nodes."""
    sysm = _setup(fld.profile, fld.source, fld.grid)
    R, _ = _residual_vec(fld.profile, fld.source, sysm, fld.values)
    return float(np.max(np.abs(R)))


def quadrature_weights(grid: Grid) -> np.ndarray:
    """Area weights for all points: dual cells plus half-arms to the boundary.

    An interior node owns ``[x - hW/2, x + hE/2] x [y - hS/2, y + hN/2]``; the
    strip of width ``s/2`` between a cell and a boundary point at arm length
    ``s`` is assigned to that boundary point.
    """
    n = grid.n_interior
    L = grid.arm_len[:n]
    w = np.zeros(grid.n_points)
    hx = 0.5 * (L[:, 0] + L[:, 1])
    hy = 0.5 * (L[:, 2] + L[:, 3])
    w[:n] = hx * hy
    for d in range(4):
        q = grid.arm_idx[:n, d]
        b = q >= n
        width = hy if d < 2 else hx
        np.add.at(w, q[b], 0.5 * L[b, d] * width[b])
    return w


def _piece_param(spec, pc, pts):
    if spec.shape in ("disk", "annulus") and pc.component != ARTIFICIAL:
        cx, cy = spec.params["center"]
        return np.arctan2(pts[:, 1] - cy, pts[:, 0] - cx), True
    probe = np.asarray(pc.curve(np.array([0.25, 0.75])), dtype=float)
    probe = np.broadcast_to(probe, (2, 2))
    along_y = np.allclose(probe[1], [0.25, 0.75])
    return (pts[:, 1] if along_y else pts[:, 0]), False


def boundary_integral(grid: Grid, q, mask=None) -> float:
    """Trapezoidal ``int q ds`` over boundary points (all points ``>= n_interior``).

    ``q`` holds one value per boundary point; ``mask`` optionally restricts
    the integrand to a subset (zero elsewhere).  Each boundary piece is
    integrated in its curve parameter; closed curves wrap around.
    """
    spec = grid.spec
    kb = np.arange(grid.n_interior, grid.n_points)
    q = np.asarray(q, dtype=float)
    if mask is not None:
        q = np.where(np.asarray(mask, dtype=bool), q, 0.0)
    pcs = spec.pieces()
    lv = np.abs(np.array([pc.level(grid.points[kb, 0], grid.points[kb, 1]) for pc in pcs]))
    owner = np.argmin(lv, axis=0)
    total = 0.0
    for m, pc in enumerate(pcs):
        sel = np.nonzero(owner == m)[0]
        if sel.size < 2:
            continue
        pts = grid.points[kb[sel]]
        s, closed = _piece_param(spec, pc, pts)
        o = np.argsort(s)
        P, Q = pts[o], q[sel][o]
        seg = np.hypot(*np.diff(P, axis=0).T)
        total += float(np.sum(0.5 * (Q[1:] + Q[:-1]) * seg))
        if closed:
            total += float(0.5 * (Q[0] + Q[-1]) * np.hypot(*(P[0] - P[-1])))
    return total


def boundary_flux(fld: GridField) -> float:
    """``int a(|grad u|) <grad u, eta> ds`` over the whole boundary (inward ``eta``)."""
    grid = fld.grid
    kb = np.arange(grid.n_interior, grid.n_points)
    G = fld.point_gradient[kb]
    g = np.hypot(G[:, 0], G[:, 1])
    return boundary_integral(grid, fld.profile.a(g) * np.einsum("ij,ij->i", G, grid.normal[kb]))


def flux_balance(fld: GridField):
    """Boundary flux against ``int f(u)``; equal up to discretisation error.

    Returns ``(boundary_flux, source_integral)``.
    """
    w = quadrature_weights(fld.grid)
    return boundary_flux(fld), float(w @ fld.source.f(fld.values))


# ------------------------------------------------------- 1D problems

def solve_profile_bvp(profile, source, nodes, ua, ub, radial=False, tol=1e-12, max_iter=60):
    """Conservative three-point scheme for the two-point problem on ``nodes``.

    With ``radial=True`` the flux carries the weight ``r`` (planar radial
    reduction).
    """
    x = np.asarray(nodes, dtype=float)
    m = x.size
    u = np.linspace(ua, ub, m) if m > 2 else np.array([ua, ub])
    if m <= 2:
        return u
    dx = np.diff(x)
    wm = 0.5 * (x[1:] + x[:-1]) if radial else np.ones(m - 1)
    wn = x[1:-1] if radial else np.ones(m - 2)
    cell = 0.5 * (dx[1:] + dx[:-1]) * wn

    def resid(v):
        d = np.diff(v) / dx
        g = np.abs(d)
        if np.any(g >= profile.t_max):
            raise RegimeError("profile BVP left the validity interval")
        F = wm * profile.a(g) * d
        return (F[1:] - F[:-1]) / cell + source.f(v[1:-1]), d, g

    R, d, g = resid(u)
    res = float(np.max(np.abs(R)))
    # roundoff in flux differences grows like |F| / cell
    scale = lambda d_: 1.0 + float(np.max(np.abs(wm * profile.a(np.abs(d_)) * d_))) / cell.min()
    for _ in range(max_iter):
        if res <= tol * scale(d):
            return u
        lam = wm * (profile.a(g) + g * profile.a_prime(g)) / dx
        main = -(lam[1:] + lam[:-1]) / cell + np.asarray(source.f_prime(u[1:-1])) * np.ones(m - 2)
        J = sp.diags([lam[1:-1] / cell[1:], main, lam[1:-1] / cell[:-1]], [-1, 0, 1],
                     shape=(m - 2, m - 2), format="csc")
        step = spsolve(J, -R)
        theta = 1.0
        while True:
            trial = u.copy()
            trial[1:-1] += theta * step
            try:
                R_t, d_t, g_t = resid(trial)
                r_t = float(np.max(np.abs(R_t)))
            except RegimeError:
                r_t = math.inf
            if r_t < res or theta <= DAMPING_FLOOR:
                break
            theta *= 0.5
        if not math.isfinite(r_t):
            raise NonConvergenceError("profile BVP: Newton left the elliptic regime")
        u, R, d, g, res = trial, R_t, d_t, g_t, r_t
    if res > tol * scale(d):
        raise NonConvergenceError(f"profile BVP did not converge (residual {res:.3e})")
    return u


@dataclass(frozen=True)
class RadialProfile:
    r: np.ndarray
    u: np.ndarray
    uprime: np.ndarray
    r_min: float
    u_min: float
    interior_min: bool


def _radial_shot(profile, source, u0, R, r_eval):
    a0 = float(profile.a(0.0))
    c2 = -float(source.f(u0)) / (2 * a0)
    r0 = min(1e-6, 1e-4 * R)

    def rhs(r, y):
        u, p = y
        g = abs(p)
        lam1 = profile.a(g) + g * profile.a_prime(g)
        return [p, -(float(source.f(u)) + profile.a(g) * p / r) / lam1]

    def stop(r, y):
        g = abs(y[1])
        if g >= profile.t_max:
            return -1.0
        return float(profile.a(g) + g * profile.a_prime(g)) - 1e-10
    stop.terminal = True

    sol = solve_ivp(rhs, (r0, R), [u0 + 0.5 * c2 * r0 ** 2, c2 * r0], method="DOP853",
                    rtol=1e-12, atol=1e-13, t_eval=r_eval[r_eval >= r0], events=stop)
    return sol


def radial_solve(profile: OperatorProfile, source: SourceTerm, spec: DomainSpec2D,
                 h: float) -> RadialProfile:
    """Radial oracle for disks (shooting on ``u(0)``) and annuli (Newton)."""
    if spec.shape == "disk":
        R = spec.params["R"]
        b = float(spec.component(1).b)
        n = max(int(math.ceil(R / h)), 8)
        r = np.linspace(0.0, R, n + 1)

        def miss(u0):
            sol = _radial_shot(profile, source, u0, R, r)
            if sol.status != 0 or sol.t[-1] < R * (1 - 1e-12):
                return math.nan
            return sol.y[0, -1] - b

        lo = hi = b
        step = 1.0
        f_lo = f_hi = miss(b)
        for _ in range(60):
            if math.isfinite(f_lo) and math.isfinite(f_hi) and f_lo * f_hi <= 0:
                break
            lo, hi = b - step, b + step
            f_lo, f_hi = miss(lo), miss(hi)
            step *= 1.6
        else:
            raise NonConvergenceError("radial shooting: no bracket for u(0)")
        u0 = lo if f_lo == 0 else brentq(miss, lo, hi, xtol=1e-14, rtol=1e-14)
        sol = _radial_shot(profile, source, u0, R, r)
        u = np.concatenate([[u0], sol.y[0]]) if r[0] < sol.t[0] else sol.y[0]
        up = np.concatenate([[0.0], sol.y[1]]) if r[0] < sol.t[0] else sol.y[1]
    elif spec.shape == "annulus":
        Ri, Ro = spec.params["R_in"], spec.params["R_out"]
        n = max(int(math.ceil((Ro - Ri) / h)), 8)
        r = np.linspace(Ri, Ro, n + 1)
        u = solve_profile_bvp(profile, source, r, float(spec.component(1).b),
                              float(spec.component(2).b), radial=True)
        up = np.gradient(u, r, edge_order=2)
    else:
        raise InapplicableError(f"radial_solve needs a disk or annulus, got {spec.shape}")
    k = int(np.argmin(u))
    r_min, u_min = float(r[k]), float(u[k])
    interior = 0 < k < r.size - 1
    if interior:
        # parabola through the three nodes around the discrete minimum
        c = np.polyfit(r[k - 1:k + 2], u[k - 1:k + 2], 2)
        if c[0] > 0:
            r_min = float(-c[1] / (2 * c[0]))
            u_min = float(np.polyval(c, r_min))
    return RadialProfile(r, u, up, r_min, u_min, interior)


# ---------------------------------------------------- boundary diagnostics

@dataclass(frozen=True)
class TraceComponent:
    mean: float
    max_dev: float
    values: np.ndarray
    points: np.ndarray
    n_fallback: int


def neumann_trace(fld: GridField) -> dict:
    """``d_eta u`` at boundary points of each non-artificial component."""
    grid = fld.grid
    out = {}
    for cid in grid.spec.component_ids():
        ks = np.nonzero(grid.component == cid)[0]
        vals, nfb = [], 0
        for k in ks:
            g, how = boundary_gradient(fld, k)
            nfb += how != "line"
            vals.append(float(g @ grid.normal[k]))
        vals = np.array(vals)
        mean = float(vals.mean())
        out[cid] = TraceComponent(mean, float(np.max(np.abs(vals - mean))), vals,
                                  grid.points[ks], nfb)
    return out


def partial_star(fld: GridField, tol: Optional[float] = None, trace: Optional[dict] = None) -> tuple:
    """Components where ``|d_eta u|`` exceeds ``tol`` (default ``10 h``) at some point."""
    tol = 10 * fld.grid.h if tol is None else tol
    trace = neumann_trace(fld) if trace is None else trace
    return tuple(cid for cid, t in sorted(trace.items()) if np.max(np.abs(t.values)) > tol)


@dataclass(frozen=True)
class GradientBoundReport:
    sup_interior: float
    sup_boundary: float
    bound: float
    verdict: bool
    slack: float


def gradient_bound_check(fld: GridField, n_dim: int = 2) -> GradientBoundReport:
    """Compare ``sup |grad u|`` inside with ``max(sqrt(n/2), sup on the boundary)``."""
    src = fld.source
    lo, hi = float(np.min(fld.values)), float(np.max(fld.values))
    s = np.linspace(lo, hi, 401)
    fp = np.asarray(src.f_prime(s), dtype=float) * np.ones_like(s)
    if np.any(fp > 1e-14):
        raise InapplicableError(f"gradient bound needs f' <= 0 on [{lo:.4g}, {hi:.4g}]; "
                                f"max f' = {fp.max():.4g}", {"f_prime_nonpositive": False})
    fv = np.asarray(src.f(s), dtype=float) * np.ones_like(s)
    if not np.all(np.isfinite(fv)):
        raise InapplicableError("gradient bound needs f(u) bounded", {"f_bounded": False})
    gi = np.hypot(*interior_gradient(fld.grid, fld.values).T)
    kb = fld.grid.boundary_indices()
    gb = np.hypot(*fld.point_gradient[kb].T)
    bound = max(math.sqrt(n_dim / 2), float(gb.max()))
    slack = 5 * fld.grid.h
    return GradientBoundReport(float(gi.max()), float(gb.max()), bound,
                               bool(gi.max() <= bound + slack), slack)
