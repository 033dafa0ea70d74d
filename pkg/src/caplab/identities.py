"""Pointwise and integral identities for level sets of ``u``, checked on grids.

Derivatives are lattice central differences; NaN marks nodes whose stencil
leaves the grid, so every report is restricted to nodes where all inputs
are finite.  Frames use ``nu = grad u / |grad u|`` and ``tau = nu`` rotated
by a quarter turn; in the plane ``|II| = |u_tautau| / |grad u|``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import InapplicableError
from .fields import GridField, d1, gradient, hessian, interior_gradient, local_jet
from .linearized import KillingField2D, resolve_mask
from .solver import boundary_integral, neumann_trace, quadrature_weights

POINTWISE_IDS = ("L4.1-1", "L4.1-2", "L4.1-3", "L4.1-4", "L4.1-5", "L4.1-6")
IDENTITY_REGISTRY = {
    "L4.1-1": "|grad|grad u||^2 = u_nunu^2 + |grad_T |grad u||^2",
    "L4.1-2": "|Hess u|^2 - |grad|grad u||^2 = |grad_T |grad u||^2 + u_nu^2 |II|^2",
    "L4.1-3": "<A grad|grad u|, grad|grad u|> = lambda2 |grad_T|grad u||^2 + lambda1 u_nunu^2",
    "L4.1-4": "Hess^2(grad u, grad u) = u_nu^2 (u_nunu^2 + |grad_T|grad u||^2)",
    "L4.1-5": "A H A H contracted = 2 l1 l2 |grad_T|grad u||^2 + l1^2 u_nunu^2 + u_nu^2 l2^2 |II|^2",
    "L4.1-6": "<A grad|grad u|, grad u> = u_nu lambda1 u_nunu",
    "Bochner-A": "div(A grad|grad u|^2)/2 against the level-set decomposition",
    "Bochner-B": "|grad u| div(A grad|grad u|) against the level-set decomposition",
    "Poincare": "weighted Poincare inequality with a positive Jacobi field w",
    "Boundary": "boundary identity for a Killing field on a component with constant data",
    "Divergence": "divergence inequality for a field vanishing on the inner mask boundary",
}


@dataclass(frozen=True)
class IdentityReport:
    id: str
    residual: float
    h: float
    ratio: Optional[float] = None
    lhs_mean: float = float("nan")
    rhs_mean: float = float("nan")
    n_nodes: int = 0
    n_excluded: int = 0


def with_ratio(coarse: IdentityReport, fine: IdentityReport) -> IdentityReport:
    """Attach ``coarse.residual / fine.residual`` to the fine-level report."""
    if coarse.id != fine.id or not fine.h < coarse.h:
        raise ValueError("ratio needs the same identity on a coarse and a finer grid")
    r = coarse.residual / fine.residual if fine.residual > 0 else float("inf")
    return replace(fine, ratio=r)


def convergence_order(residuals, hs) -> np.ndarray:
    r = np.asarray(residuals, dtype=float)
    h = np.asarray(hs, dtype=float)
    return np.log(r[:-1] / r[1:]) / np.log(h[:-1] / h[1:])


# ---------------------------------------------------------------- lattice jet

@dataclass(frozen=True)
class LatticeJet:
    """Derivatives of ``u`` on the grid lattice (NaN where undefined)."""

    h: float
    U: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    uxx: np.ndarray
    uxy: np.ndarray
    uyy: np.ndarray
    region: np.ndarray

    @property
    def grad_norm(self):
        return np.hypot(self.ux, self.uy)

    def frame(self):
        g = self.grad_norm
        safe = np.where(g > 0, g, 1.0)
        nx = np.where(g > 0, self.ux / safe, 1.0)
        ny = np.where(g > 0, self.uy / safe, 0.0)
        return nx, ny, -ny, nx

    def frame_hessian(self):
        """``(u_nunu, u_nutau, u_tautau)``."""
        nx, ny, tx, ty = self.frame()
        H = lambda ax, ay, bx, by: ax * (self.uxx * bx + self.uxy * by) + ay * (self.uxy * bx + self.uyy * by)
        return H(nx, ny, nx, ny), H(nx, ny, tx, ty), H(tx, ty, tx, ty)


def lattice_jet(fld: GridField, fn: Optional[Callable] = None, order: int = 2) -> LatticeJet:
    """Central-difference jet of the field, or of ``fn`` sampled on the whole lattice."""
    grid = fld.grid
    h = grid.h
    if fn is None:
        U = fld.lattice()
    else:
        X, Y = grid.lattice_coords()
        U = np.asarray(fn(X, Y), dtype=float)
    ux, uy = gradient(U, h, order)
    uxx, uxy, uyy = hessian(U, h, order)
    return LatticeJet(h, U, ux, uy, uxx, uxy, uyy, grid.interior_lattice_mask())


def _tensor(profile, ux, uy):
    g = np.hypot(ux, uy)
    a = profile.a(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(g > 0, profile.a_prime(g) / np.where(g > 0, g, 1.0), 0.0)
    return a + c * ux * ux, c * ux * uy, a + c * uy * uy


def _admissible(jet: LatticeJet, exclusion: float, *arrays):
    ok = jet.region & (jet.grad_norm > exclusion)
    for A in arrays:
        ok &= np.isfinite(A)
    return ok


def _report(iid, lhs, rhs, ok, jet, excluded):
    if not ok.any():
        raise InapplicableError(f"{iid}: no admissible nodes", {"admissible_nodes": False})
    r = np.abs(lhs - rhs)[ok]
    return IdentityReport(iid, float(r.max()), jet.h, None, float(lhs[ok].mean()),
                          float(rhs[ok].mean()), int(ok.sum()), int(excluded))


def verify_pointwise_identities(fld: GridField, exclusion: Optional[float] = None,
                                fn: Optional[Callable] = None) -> list:
    """Both sides of the six level-set identities at admissible interior nodes.

    The left-hand sides use ``grad |grad u|`` obtained by differencing the
    lattice of ``|grad u|``; the right-hand sides use the Hessian in the
    ``(nu, tau)`` frame.  Nodes with ``|grad u| <= exclusion`` (default
    ``10 h``) are skipped and counted.
    """
    jet = lattice_jet(fld, fn)
    h = jet.h
    exclusion = 10 * h if exclusion is None else exclusion
    g = jet.grad_norm
    gx, gy = d1(g, h, 0), d1(g, h, 1)
    unn, unt, utt = jet.frame_hessian()
    lam1, lam2 = fld.profile.lambda1(np.nan_to_num(g)), fld.profile.lambda2(np.nan_to_num(g))
    A11, A12, A22 = _tensor(fld.profile, np.nan_to_num(jet.ux), np.nan_to_num(jet.uy))
    ok = _admissible(jet, exclusion, gx, gy, jet.uxx, jet.uxy, jet.uyy)
    excluded = int((jet.region & np.isfinite(g) & (g <= exclusion)).sum())
    T2 = unt ** 2
    II2 = (utt / np.where(g > 0, g, 1.0)) ** 2
    hess2 = jet.uxx ** 2 + 2 * jet.uxy ** 2 + jet.uyy ** 2
    out = []
    out.append(_report("L4.1-1", gx ** 2 + gy ** 2, unn ** 2 + T2, ok, jet, excluded))
    out.append(_report("L4.1-2", hess2 - (gx ** 2 + gy ** 2), T2 + g ** 2 * II2, ok, jet, excluded))
    AG = (A11 * gx + A12 * gy, A12 * gx + A22 * gy)
    out.append(_report("L4.1-3", AG[0] * gx + AG[1] * gy, lam2 * T2 + lam1 * unn ** 2,
                       ok, jet, excluded))
    Hg = (jet.uxx * jet.ux + jet.uxy * jet.uy, jet.uxy * jet.ux + jet.uyy * jet.uy)
    out.append(_report("L4.1-4", Hg[0] ** 2 + Hg[1] ** 2, g ** 2 * (unn ** 2 + T2),
                       ok, jet, excluded))
    # tr(A H A H) with symmetric 2x2 blocks
    P11 = A11 * jet.uxx + A12 * jet.uxy
    P12 = A11 * jet.uxy + A12 * jet.uyy
    P21 = A12 * jet.uxx + A22 * jet.uxy
    P22 = A12 * jet.uxy + A22 * jet.uyy
    lhs5 = P11 ** 2 + 2 * P12 * P21 + P22 ** 2
    out.append(_report("L4.1-5", lhs5, 2 * lam1 * lam2 * T2 + lam1 ** 2 * unn ** 2
                       + g ** 2 * lam2 ** 2 * II2, ok, jet, excluded))
    out.append(_report("L4.1-6", AG[0] * jet.ux + AG[1] * jet.uy, g * lam1 * unn,
                       ok, jet, excluded))
    return out


def level_set_quantities(fld: GridField, fn: Optional[Callable] = None):
    """Lattice arrays ``(|grad u|, |II|^2, |grad_T |grad u||^2)``."""
    jet = lattice_jet(fld, fn)
    g = jet.grad_norm
    unn, unt, utt = jet.frame_hessian()
    with np.errstate(divide="ignore", invalid="ignore"):
        II2 = np.where(g > 0, (utt / g) ** 2, np.nan)
    return g, II2, unt ** 2


# -------------------------------------------------------------------- Bochner

def verify_bochner(fld: GridField, variant: str = "A", fn: Optional[Callable] = None,
                   exclusion: Optional[float] = None, order: int = 2) -> IdentityReport:
    """Bochner-type formula for ``A(grad u)`` in the flat plane.

    With ``fn`` the field is manufactured and ``<grad Delta_a u, grad u>``
    is obtained by differencing ``tr(A H)``; otherwise the equation gives
    ``-f'(u) |grad u|^2``.
    """
    if variant not in ("A", "B"):
        raise ValueError("variant must be 'A' or 'B'")
    if min(fld.grid.shape) < 11:
        raise InapplicableError("Bochner check needs at least 11 nodes per axis",
                                {"grid_size": False})
    jet = lattice_jet(fld, fn, order)
    h = jet.h
    prof = fld.profile
    g = jet.grad_norm
    A11, A12, A22 = _tensor(prof, jet.ux, jet.uy)
    lam1, lam2 = prof.lambda1(np.nan_to_num(g)), prof.lambda2(np.nan_to_num(g))
    unn, unt, utt = jet.frame_hessian()
    T2 = unt ** 2
    uII2 = utt ** 2  # u_nu^2 |II|^2
    if fn is None:
        if fld.source is None:
            raise ValueError("Bochner check on a grid field needs its source term, or pass fn")
        drift = -np.asarray(fld.source.f_prime(np.nan_to_num(jet.U)), dtype=float) * g ** 2
        drift = np.where(np.isfinite(jet.U), drift, np.nan)
    else:
        tr = A11 * jet.uxx + 2 * A12 * jet.uxy + A22 * jet.uyy
        drift = d1(tr, h, 0, order) * jet.ux + d1(tr, h, 1, order) * jet.uy
    ric = 0.0
    if variant == "A":
        s = g ** 2
        sx, sy = d1(s, h, 0, order), d1(s, h, 1, order)
        lhs = 0.5 * (d1(A11 * sx + A12 * sy, h, 0, order) + d1(A12 * sx + A22 * sy, h, 1, order))
        rhs = lam1 * unn ** 2 + (lam1 + lam2) * T2 + lam2 * uII2 + lam2 * ric + drift
    else:
        gx, gy = d1(g, h, 0, order), d1(g, h, 1, order)
        lhs = g * (d1(A11 * gx + A12 * gy, h, 0, order) + d1(A12 * gx + A22 * gy, h, 1, order))
        rhs = lam1 * T2 + lam2 * uII2 + lam2 * ric + drift
    exclusion = 10 * h if exclusion is None else exclusion
    ok = _admissible(jet, exclusion, lhs, rhs)
    excluded = int((jet.region & np.isfinite(g) & (g <= exclusion)).sum())
    return _report(f"Bochner-{variant}", lhs, rhs, ok, jet, excluded)


# ------------------------------------------------------------------ Poincare

@dataclass(frozen=True)
class PoincareReport:
    lhs: float
    rhs: float
    slack: float
    curvature_term: float
    jacobi_term: float
    n_nodes: int


def _lattice_of(fld, values):
    if isinstance(values, GridField):
        return values.lattice()
    if callable(values):
        X, Y = fld.grid.lattice_coords()
        return np.asarray(values(X, Y), dtype=float)
    return fld.grid.lattice(values)


def verify_poincare(fld: GridField, w, phi, mask=None) -> PoincareReport:
    """Slack ``LHS - RHS`` of the weighted Poincare inequality.

    ``LHS = int |grad u|^2 <A grad phi, grad phi>`` and
    ``RHS = int phi^2 (lambda1 |grad_T|grad u||^2 + lambda2 |grad u|^2 |II|^2)
    + int w^2 <A grad psi, grad psi>`` with ``psi = phi |grad u| / w``.
    ``w`` and ``phi`` are grid fields, point arrays or callables ``(x, y)``.
    Midpoint rule over lattice nodes where every term is defined.
    """
    grid = fld.grid
    h = grid.h
    jet = lattice_jet(fld)
    W = _lattice_of(fld, w)
    Phi = _lattice_of(fld, phi)
    if mask is None:
        region = jet.region & (np.abs(np.nan_to_num(Phi)) > 0)
    else:
        m, _ = resolve_mask(grid, mask)
        region = np.zeros(grid.shape, dtype=bool)
        k = np.nonzero(m)[0]
        region[grid.ij[k, 0], grid.ij[k, 1]] = True
    if np.any(~(W[region] > 0)):
        raise InapplicableError("poincare: w must be positive on the mask", {"w_positive": False})
    g = jet.grad_norm
    A11, A12, A22 = _tensor(fld.profile, jet.ux, jet.uy)
    lam1, lam2 = fld.profile.lambda1(np.nan_to_num(g)), fld.profile.lambda2(np.nan_to_num(g))
    unn, unt, utt = jet.frame_hessian()
    px, py = gradient(Phi, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        Psi = Phi * g / W
    sx, sy = gradient(Psi, h)
    quad = lambda vx, vy: vx * (A11 * vx + A12 * vy) + vy * (A12 * vx + A22 * vy)
    lhs_d = g ** 2 * quad(px, py)
    curv_d = Phi ** 2 * (lam1 * unt ** 2 + lam2 * utt ** 2)
    jac_d = W ** 2 * quad(sx, sy)
    # phi vanishes outside its support, so nodes with phi = 0 and a zero stencil contribute 0
    inside = np.isfinite(lhs_d) & np.isfinite(curv_d) & np.isfinite(jac_d)
    supp = jet.region & (np.abs(np.nan_to_num(Phi)) + np.abs(np.nan_to_num(px)) + np.abs(np.nan_to_num(py)) > 0)
    if np.any(supp & ~inside):
        raise InapplicableError("poincare: cutoff support reaches undefined stencils",
                                {"compact_support": False})
    sel = supp & inside
    area = h * h
    L = float(np.sum(lhs_d[sel]) * area)
    C = float(np.sum(curv_d[sel]) * area)
    J = float(np.sum(jac_d[sel]) * area)
    return PoincareReport(L, C + J, L - C - J, C, J, int(sel.sum()))


# ------------------------------------------------------------ boundary identity

@dataclass(frozen=True)
class BoundaryIdentityReport:
    residual: float
    component: int
    c: float
    n_points: int
    values: np.ndarray


def verify_boundary_identity(fld: GridField, X: KillingField2D, component: int,
                             radius: float = 3.0) -> BoundaryIdentityReport:
    """Sup over the component of
    ``<w A grad(|grad u|^2/2) - |grad u|^2 A grad w, eta> + lambda1 |grad u|^2 c <eta, grad_eta X>``
    with ``w = <grad u, X>`` and derivatives from local cubic fits.
    """
    grid = fld.grid
    h = grid.h
    tr = neumann_trace(fld)
    if component not in tr:
        raise KeyError(f"unknown component id {component}")
    comp = grid.spec.component(component)
    dev = tr[component].max_dev
    if not comp.constant or dev >= 10 * h * h:
        raise InapplicableError(
            f"boundary identity: component {component} data not constant "
            f"(Neumann deviation {dev:.3e}, limit {10 * h * h:.3e})",
            {"constant_dirichlet": comp.constant, "constant_neumann": dev < 10 * h * h})
    c = tr[component].mean
    ks = np.nonzero(grid.component == component)[0]
    DX = X.gradient()
    vals = np.empty(ks.size)
    for i, k in enumerate(ks):
        p = grid.points[k]
        eta = grid.normal[k]
        du, H = local_jet(fld, p, radius)
        Xp = X(p[0], p[1])
        w = float(du @ Xp)
        dw = H @ Xp + DX.T @ du
        A = _point_tensor(fld.profile, du)
        g2 = float(du @ du)
        lam1 = float(fld.profile.lambda1(np.sqrt(g2)))
        vals[i] = (float(eta @ (w * (A @ (H @ du)) - g2 * (A @ dw)))
                   + lam1 * g2 * c * float(eta @ (DX @ eta)))
    return BoundaryIdentityReport(float(np.max(np.abs(vals))), component, c, ks.size, vals)


def _point_tensor(profile, du):
    a11, a12, a22 = _tensor(profile, np.array([du[0]]), np.array([du[1]]))
    return np.array([[a11[0], a12[0]], [a12[0], a22[0]]])


# ---------------------------------------------------------------- divergence

@dataclass(frozen=True)
class DivergenceReport:
    slack: float
    boundary_term: float
    volume_term: float
    inner_boundary_max: float
    source_excess: float


def divergence_check(fld: GridField, W: Callable, omega0=None, source: Optional[Callable] = None,
                     tol: Optional[float] = None) -> DivergenceReport:
    """``slack = -(int_{bdry cap Omega0} <W, eta> + int_{Omega0} h)``.

    ``W(fld)`` returns an ``(N, 2)`` array at grid points; ``source(fld)``
    returns ``h`` at points and defaults to the discrete divergence of ``W``.
    ``omega0`` is a point mask or callable ``(x, y)``; ``W`` must vanish on
    the interior nodes of ``Omega0`` that touch its complement.
    """
    grid = fld.grid
    N, n = grid.n_points, grid.n_interior
    x, y = grid.points.T
    if omega0 is None:
        m0 = np.ones(N, dtype=bool)
    elif callable(omega0):
        m0 = np.asarray(omega0(x, y), dtype=bool)
    else:
        m0 = np.asarray(omega0, dtype=bool)
    Wv = np.asarray(W(fld), dtype=float)
    nb = grid.arm_idx[:n]
    rim = m0[:n] & np.any((nb >= 0) & ~m0[np.clip(nb, 0, N - 1)], axis=1)
    rim_max = float(np.max(np.hypot(*Wv[:n][rim].T))) if rim.any() else 0.0
    tol = 10 * grid.h if tol is None else tol
    if rim_max > tol:
        raise InapplicableError(f"divergence: W = {rim_max:.3e} on the inner boundary of Omega0",
                                {"W_vanishes_on_inner_boundary": False})
    divW = point_divergence(grid, Wv)
    hv = divW if source is None else np.asarray(source(fld), dtype=float)
    excess = float(np.max((hv - divW)[:n][m0[:n]])) if m0[:n].any() else 0.0
    kb = np.arange(n, N)
    q = np.einsum("ij,ij->i", Wv[kb], grid.normal[kb])
    bnd = boundary_integral(grid, q, m0[kb])
    wts = quadrature_weights(grid)
    vol = float(np.sum((wts * np.where(m0, hv, 0.0))[:n]) + np.sum((wts * np.where(m0, hv, 0.0))[n:]))
    return DivergenceReport(-(bnd + vol), bnd, vol, rim_max, excess)


def point_divergence(grid, V) -> np.ndarray:
    """Three-point divergence at interior nodes; boundary points copy their parent node."""
    out = np.empty(grid.n_points)
    n = grid.n_interior
    out[:n] = interior_gradient(grid, V[:, 0])[:, 0] + interior_gradient(grid, V[:, 1])[:, 1]
    for k in range(n, grid.n_points):
        nbrs = grid.arm_idx[k][grid.arm_idx[k] >= 0]
        nbrs = nbrs[nbrs < n]
        out[k] = out[nbrs[0]] if nbrs.size else 0.0
    return out
