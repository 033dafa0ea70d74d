"""Scalar fields on cut-cell grids and their finite-difference derivatives."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .domain import ARTIFICIAL, DIRS, OPPOSITE, Grid
from .operators import OperatorProfile
from .sources import SourceTerm

GRAZING = 0.25


@dataclass(frozen=True, eq=False)
class GridField:
    """Values at every grid point (interior nodes and boundary points)."""

    grid: Grid
    values: np.ndarray
    profile: Optional[OperatorProfile] = None
    source: Optional[SourceTerm] = None
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable, profile=None, source=None, **meta):
        x, y = grid.points.T
        return cls(grid, np.asarray(fn(x, y), dtype=float), profile, source, dict(meta))

    def replace(self, values=None, **meta):
        md = dict(self.metadata)
        md.update(meta)
        vals = self.values if values is None else np.asarray(values, dtype=float)
        return GridField(self.grid, vals, self.profile, self.source, md)

    def lattice(self) -> np.ndarray:
        return self.grid.lattice(self.values)

    @cached_property
    def tree(self):
        return cKDTree(self.grid.points)

    @cached_property
    def point_gradient(self) -> np.ndarray:
        """Gradient at every point, shape ``(N, 2)``."""
        g = np.full((self.grid.n_points, 2), np.nan)
        g[: self.grid.n_interior] = interior_gradient(self.grid, self.values)
        for k in range(self.grid.n_interior, self.grid.n_points):
            g[k] = boundary_gradient(self, k)[0]
        return g


# ------------------------------------------------------------- lattices

def shift(U: np.ndarray, di: int, dj: int) -> np.ndarray:
    """``out[i, j] = U[i + di, j + dj]`` with NaN outside the array."""
    out = np.full_like(U, np.nan)
    nx, ny = U.shape
    xs = slice(max(0, -di), min(nx, nx - di))
    ys = slice(max(0, -dj), min(ny, ny - dj))
    xt = slice(max(0, di), min(nx, nx + di))
    yt = slice(max(0, dj), min(ny, ny + dj))
    out[xs, ys] = U[xt, yt]
    return out


def d1(U, h, axis, order=2):
    """Central first derivative along ``axis`` (0 = x, 1 = y)."""
    e = (1, 0) if axis == 0 else (0, 1)
    p1 = shift(U, e[0], e[1])
    m1 = shift(U, -e[0], -e[1])
    if order == 2:
        return (p1 - m1) / (2 * h)
    p2 = shift(U, 2 * e[0], 2 * e[1])
    m2 = shift(U, -2 * e[0], -2 * e[1])
    return (-p2 + 8 * p1 - 8 * m1 + m2) / (12 * h)


def d2(U, h, axis, order=2):
    e = (1, 0) if axis == 0 else (0, 1)
    p1 = shift(U, e[0], e[1])
    m1 = shift(U, -e[0], -e[1])
    if order == 2:
        return (p1 - 2 * U + m1) / h ** 2
    p2 = shift(U, 2 * e[0], 2 * e[1])
    m2 = shift(U, -2 * e[0], -2 * e[1])
    return (-p2 + 16 * p1 - 30 * U + 16 * m1 - m2) / (12 * h ** 2)


def gradient(U, h, order=2):
    return d1(U, h, 0, order), d1(U, h, 1, order)


def hessian(U, h, order=2):
    """``(u_xx, u_xy, u_yy)`` on a lattice array."""
    return d2(U, h, 0, order), d1(d1(U, h, 0, order), h, 1, order), d2(U, h, 1, order)


def divergence(Vx, Vy, h, order=2):
    return d1(Vx, h, 0, order) + d1(Vy, h, 1, order)


# ------------------------------------------------------ point gradients

def interior_gradient(grid: Grid, values) -> np.ndarray:
    """Three-point gradient on the (possibly unequal) arms of interior nodes."""
    n = grid.n_interior
    u = np.asarray(values, dtype=float)
    idx, ln = grid.arm_idx[:n], grid.arm_len[:n]
    up = u[:n]
    out = np.empty((n, 2))
    for axis, (dp, dm) in enumerate(((0, 1), (2, 3))):
        hp, hm = ln[:, dp], ln[:, dm]
        out[:, axis] = (hm ** 2 * (u[idx[:, dp]] - up) + hp ** 2 * (up - u[idx[:, dm]])) / (
            hp * hm * (hp + hm))
    return out


def one_sided(u0, u1, u2, s1, s2):
    """Second-order derivative at 0 from samples at 0, s1, s2."""
    return (-(s1 + s2) / (s1 * s2) * u0 + s2 / (s1 * (s2 - s1)) * u1
            - s1 / (s2 * (s2 - s1)) * u2)


def _line_candidates(grid: Grid, k: int):
    """Grid lines entering the domain from boundary point ``k``."""
    out = []
    if grid.ij[k, 0] < 0:
        d = OPPOSITE[grid.parent_dir[k]]
        dirs = [d]
    else:
        dirs = range(4)
    for d in dirs:
        q = grid.arm_idx[k, d]
        if q < 0:
            continue
        r = grid.arm_idx[q, d]
        if r < 0:
            continue
        s1 = grid.arm_len[k, d]
        out.append((d, q, r, s1, s1 + grid.arm_len[q, d]))
    return out


def tangential_derivative(grid: Grid, k: int) -> float:
    cid = grid.component[k]
    if cid == ARTIFICIAL:
        return np.nan
    comp = grid.spec.component(cid)
    if comp.constant:
        return 0.0
    nx, ny = grid.normal[k]
    tx, ty = -ny, nx
    x, y = grid.points[k]
    d = 1e-6
    return float((comp.value(x + d * tx, y + d * ty) - comp.value(x - d * tx, y - d * ty)) / (2 * d))


def boundary_gradient(fld: GridField, k: int):
    """Gradient at boundary point ``k`` and the method used.

    Along the grid line with the largest ``<eta, e>`` a one-sided three-point
    difference gives ``d_e u``; with the tangential derivative of the data
    this determines the full gradient.  Grazing lines (``<eta, e> < 0.25``)
    and artificial points fall back to a local cubic fit.
    """
    grid = fld.grid
    u = fld.values
    eta = grid.normal[k]
    dtau = tangential_derivative(grid, k)
    best = None
    if np.isfinite(dtau):
        for d, q, r, s1, s2 in _line_candidates(grid, k):
            c = float(eta @ DIRS[d])
            if best is None or c > best[0]:
                best = (c, d, q, r, s1, s2)
    if best is None or best[0] < GRAZING:
        g, _ = local_jet(fld, grid.points[k])
        return g, "jet"
    c, d, q, r, s1, s2 = best
    e = DIRS[d].astype(float)
    tau = np.array([-eta[1], eta[0]])
    de = one_sided(u[k], u[q], u[r], s1, s2)
    dn = (de - dtau * float(tau @ e)) / c
    return dn * eta + dtau * tau, "line"


def local_jet(fld: GridField, p, radius: float = 3.0, degree: int = 3):
    """Least-squares polynomial fit around ``p``; returns ``(grad, hess)``.

    Uses every grid point within ``radius * h`` of ``p``.
    """
    h = fld.grid.h
    p = np.asarray(p, dtype=float)
    idx = fld.tree.query_ball_point(p, radius * h)
    X = (fld.grid.points[idx] - p) / h
    pw = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    M = np.column_stack([X[:, 0] ** i * X[:, 1] ** j for i, j in pw])
    coef, *_ = np.linalg.lstsq(M, fld.values[idx], rcond=None)
    c = dict(zip(pw, coef))
    grad = np.array([c[(1, 0)], c[(0, 1)]]) / h
    hess = np.array([[2 * c[(2, 0)], c[(1, 1)]], [c[(1, 1)], 2 * c[(0, 2)]]]) / h ** 2
    return grad, hess
