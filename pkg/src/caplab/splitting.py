"""One-dimensionality, critical sets and the two-piece gluing check."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .errors import InapplicableError
from .fields import GridField, interior_gradient
from .identities import level_set_quantities
from .profile import shoot

ANGLE_TOL = 1e-2


# ---------------------------------------------------------------- geometry

def geometry_fields(fld: GridField, exclusion: Optional[float] = None):
    """Lattice arrays ``|II|^2`` and ``|grad_T |grad u||^2``.

    NaN outside the interior and where ``|grad u| <= exclusion``
    (default ``10 h``).
    """
    ex = 10 * fld.grid.h if exclusion is None else exclusion
    g, II2, T2 = level_set_quantities(fld)
    bad = ~fld.grid.interior_lattice_mask() | ~np.isfinite(g) | (g <= ex)
    return np.where(bad, np.nan, II2), np.where(bad, np.nan, T2)


def _point_mask(fld, mask):
    n = fld.grid.n_points
    if mask is None:
        return np.ones(n, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    if m.shape != (n,):
        raise ValueError(f"mask must have shape ({n},)")
    return m


def _lattice_mask(grid, point_mask):
    L = np.zeros(grid.shape, dtype=bool)
    k = np.nonzero(point_mask[: grid.n_interior])[0]
    L[grid.ij[k, 0], grid.ij[k, 1]] = True
    return L


def _tls(P):
    """Total least squares line: centroid, unit direction, perpendicular distances."""
    c = P.mean(axis=0)
    _, _, vt = np.linalg.svd(P - c, full_matrices=False)
    d = vt[0]
    dist = np.abs((P - c) @ np.array([-d[1], d[0]]))
    return c, d, dist


# ---------------------------------------------------------------- profiles

@dataclass(frozen=True)
class ReconstructedProfile:
    """``u_0(t)`` sampled along ``anchor + (t - <anchor, d>) d``."""

    t: np.ndarray
    u: np.ndarray
    uprime: np.ndarray
    anchor: np.ndarray
    direction: np.ndarray
    spline: CubicSpline

    def __call__(self, t):
        return self.spline(t)


def reconstruct_profile(fld: GridField, direction, mask=None, anchor=None) -> ReconstructedProfile:
    """Spline through the values within ``h/2`` of the line through ``anchor`` along ``direction``.

    The default anchor is the lattice node of the mask nearest to the mask's
    centroid, so that axis-aligned lines run along grid rows.
    """
    grid = fld.grid
    m = _point_mask(fld, mask)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    P = grid.points
    if anchor is None:
        lat = np.nonzero(m & (grid.ij[:, 0] >= 0))[0]
        c = P[lat].mean(axis=0)
        anchor = P[lat[np.argmin(np.hypot(*(P[lat] - c).T))]]
    anchor = np.asarray(anchor, dtype=float)
    nrm = np.array([-d[1], d[0]])
    near = m & (np.abs((P - anchor) @ nrm) <= 0.5 * grid.h)
    t = P[near] @ d
    u = fld.values[near]
    order = np.argsort(t, kind="stable")
    t, u = t[order], u[order]
    # merge coincident samples
    keep = np.concatenate([[True], np.diff(t) > 1e-9 * grid.h])
    grp = np.cumsum(keep) - 1
    t = t[keep]
    u = np.bincount(grp, u) / np.bincount(grp)
    if t.size < 4:
        raise InapplicableError("splitting: fewer than 4 samples along the profile line",
                                {"profile_samples": False})
    sp = CubicSpline(t, u)
    return ReconstructedProfile(t, u, sp(t, 1), anchor, d, sp)


def shoot_mismatch(prof: ReconstructedProfile, profile, source, step: float = 1e-4,
                   seed_at: str = "start"):
    """Sup difference between the reconstructed profile and an RK4 shoot seeded from it."""
    t0, t1 = (prof.t[0], prof.t[-1]) if seed_at == "start" else (prof.t[-1], prof.t[0])
    n = max(int(np.ceil(abs(t1 - t0) / step)), 8)
    sol = shoot(profile, source, float(prof(t0)), float(prof.spline(t0, 1)), (t0, t1),
                abs(t1 - t0) / n)
    ts, us = sol.t, sol.u
    if ts[0] > ts[-1]:
        ts, us = ts[::-1], us[::-1]
    ok = (prof.t >= ts[0]) & (prof.t <= ts[-1])
    ref = CubicSpline(ts, us)(prof.t[ok])
    mis = float(np.max(np.abs(prof.u[ok] - ref))) if ok.any() else float("inf")
    return mis, sol


# ---------------------------------------------------------------- critical set

@dataclass(frozen=True)
class CriticalSet:
    nodes: np.ndarray
    tol: float
    n_components: int
    labels: np.ndarray
    n_clusters: int
    centroids: np.ndarray
    line_point: Optional[np.ndarray]
    line_direction: Optional[np.ndarray]
    residual: float
    max_residual: float

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.size)

    @property
    def disconnecting(self) -> bool:
        return self.n_components >= 2

    def collinear(self, h: float, min_nodes: int = 8, max_residual: float = 5.0) -> bool:
        """At least ``min_nodes`` nodes with TLS residual at most ``max_residual * h``."""
        return self.n_nodes >= min_nodes and self.residual <= max_residual * h

    def summary(self) -> dict:
        return {"n_nodes": self.n_nodes, "n_components": self.n_components,
                "n_clusters": self.n_clusters, "line_residual": self.residual}


def critical_set(fld: GridField, tol: Optional[float] = None) -> CriticalSet:
    """Interior nodes with ``|grad u| <= tol`` (default ``10 h``) and the 4-connected
    components of the remaining interior nodes."""
    grid = fld.grid
    tol = 10 * grid.h if tol is None else float(tol)
    n = grid.n_interior
    g = np.hypot(*interior_gradient(grid, fld.values).T)
    crit = np.nonzero(g <= tol)[0]
    cm = np.zeros(grid.n_points, dtype=bool)
    cm[crit] = True
    rest = _lattice_mask(grid, ~cm & (np.arange(grid.n_points) < n))
    labels, ncomp = ndimage.label(rest)
    clab, ncl = ndimage.label(_lattice_mask(grid, cm))
    P = grid.points[crit]
    if ncl:
        ids = clab[grid.ij[crit, 0], grid.ij[crit, 1]]
        cents = np.array([P[ids == k].mean(axis=0) for k in range(1, ncl + 1)])
    else:
        cents = np.zeros((0, 2))
    if crit.size >= 2:
        c, d, dist = _tls(P)
        res, mres = float(np.sqrt(np.mean(dist ** 2))), float(dist.max())
    else:
        c = d = None
        res = mres = 0.0
    return CriticalSet(crit, tol, int(ncomp), labels, int(ncl), cents, c, d, res, mres)


def component_masks(fld: GridField, cs: CriticalSet) -> list:
    """Point masks of the components of ``Omega minus crit``.

    Boundary points join the component of the lattice node they hang off.
    """
    grid = fld.grid
    n = grid.n_interior
    lab = np.zeros(grid.n_points, dtype=int)
    lab[:n] = cs.labels[grid.ij[:n, 0], grid.ij[:n, 1]]
    for k in range(n, grid.n_points):
        nb = grid.arm_idx[k]
        nb = nb[(nb >= 0) & (nb < n)]
        if nb.size:
            lab[k] = np.max(lab[nb])
    return [lab == i for i in range(1, cs.n_components + 1)]


# ---------------------------------------------------------------- splitting

@dataclass(frozen=True)
class SplitReport:
    is_1d: bool
    direction: Optional[np.ndarray]
    sup_II2: float
    sup_gradT2: float
    tol: float
    profile: Optional[ReconstructedProfile]
    mismatch: float
    shoot_mismatch: float
    critical: dict
    n_region: int

    def to_dict(self) -> dict:
        return {
            "is_1d": self.is_1d,
            "direction": None if self.direction is None else [float(v) for v in self.direction],
            "sup_II2": self.sup_II2, "sup_gradT2": self.sup_gradT2, "tol": self.tol,
            "mismatch": self.mismatch, "shoot_mismatch": self.shoot_mismatch,
            "critical": self.critical, "n_region": self.n_region,
        }


def detect_splitting(fld: GridField, tol: Optional[float] = None, mask=None,
                     exclusion: Optional[float] = None) -> SplitReport:
    """Decide whether ``u`` is one-dimensional on the masked region.

    ``is_1d`` holds when ``sup |II|^2`` and ``sup |grad_T |grad u||^2`` are at
    most ``tol`` (default ``100 h^2``).  The direction is the normalised mean
    of ``nu = grad u / |grad u|``; ``mismatch`` is
    ``sup |u - u_0(<x, direction>)|`` over the masked points.  When the field
    carries a profile and source, ``u_0`` is also compared with an RK4 shoot
    seeded with its value and slope at the start of the line.
    """
    grid = fld.grid
    h = grid.h
    tol = 100 * h * h if tol is None else float(tol)
    m = _point_mask(fld, mask)
    II2, T2 = geometry_fields(fld, exclusion)
    L = _lattice_mask(grid, m)
    ok = L & np.isfinite(II2) & np.isfinite(T2)
    cs = critical_set(fld)
    crit = cs.summary()
    if not ok.any():
        return SplitReport(False, None, float("nan"), float("nan"), tol, None, float("inf"),
                           float("inf"), crit, 0)
    sII, sT = float(II2[ok].max()), float(T2[ok].max())
    jet_g = interior_gradient(grid, fld.values)
    region = np.nonzero(m[: grid.n_interior])[0]
    g = jet_g[region]
    gn = np.hypot(*g.T)
    ex = 10 * h if exclusion is None else exclusion
    sel = gn > ex
    nu = (g[sel] / gn[sel, None]).mean(axis=0)
    direction = nu / np.linalg.norm(nu)
    is_1d = sII <= tol and sT <= tol
    prof = reconstruct_profile(fld, direction, m)
    t_all = grid.points[m] @ direction
    inside = (t_all >= prof.t[0]) & (t_all <= prof.t[-1])
    mis = float(np.max(np.abs(fld.values[m][inside] - prof(t_all[inside])), initial=0.0))
    smis = float("nan")
    if fld.profile is not None and fld.source is not None:
        smis = shoot_mismatch(prof, fld.profile, fld.source)[0]
    return SplitReport(bool(is_1d), direction, sII, sT, tol, prof, mis, smis, crit, int(ok.sum()))


# ---------------------------------------------------------------- gluing

@dataclass(frozen=True)
class GlueReport:
    clauses: dict
    details: dict

    @property
    def verdict(self) -> bool:
        return all(self.clauses.values())


def _boundary_direction(grid, cid):
    P = grid.points[grid.component == cid]
    return _tls(P)[1]


def _angle(u, v, oriented=False):
    """Angle between lines (or vectors when ``oriented``)."""
    c = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    if not oriented:
        c = abs(c)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def glue_check(fld: GridField, profile_tol: float = 1e-4, crit_tol: Optional[float] = None,
               split_tol: Optional[float] = None) -> GlueReport:
    """Two-piece gluing on a strip or slab with a disconnecting critical line.

    Clauses: (a) ``|grad u| >= 10 crit_tol`` on both walls, (b) each side of
    the critical set is one-dimensional, (c) the two directions are
    (anti)parallel and the critical line is parallel to both walls within
    1e-2 rad, (d) each side agrees with the 1D shoot started at the minimum
    of the profile with zero slope, mirrored about the critical line.
    """
    grid = fld.grid
    h = grid.h
    if grid.spec.shape not in ("strip", "slab"):
        raise InapplicableError(f"glue: shape {grid.spec.shape!r} is not a strip or slab",
                                {"strip_or_slab": False})
    if fld.profile is None or fld.source is None:
        raise InapplicableError("glue: field carries no profile/source", {"operator_known": False})
    cs = critical_set(fld, crit_tol)
    if not cs.disconnecting or not cs.collinear(h):
        raise InapplicableError(
            f"glue: no disconnecting collinear critical set (nodes {cs.n_nodes}, components "
            f"{cs.n_components}, residual {cs.residual:.3g})",
            {"disconnecting_crit": cs.disconnecting, "collinear_crit": cs.collinear(h)})
    walls = [c.id for c in grid.spec.components]
    # (a)
    pg = fld.point_gradient
    wall_min = {cid: float(np.min(np.hypot(*pg[grid.component == cid].T))) for cid in walls}
    clause_a = all(v >= 10 * cs.tol for v in wall_min.values())
    # (b)
    masks = component_masks(fld, cs)
    masks = sorted(masks, key=lambda mk: -mk.sum())[:2]
    reps = [detect_splitting(fld, split_tol, mk) for mk in masks]
    clause_b = len(reps) == 2 and all(r.is_1d for r in reps)
    # (c)
    d1, d2 = reps[0].direction, reps[1].direction
    ang_dirs = _angle(d1, d2)
    ang_walls = [_angle(cs.line_direction, _boundary_direction(grid, cid)) for cid in walls]
    clause_c = ang_dirs <= ANGLE_TOL and all(a <= ANGLE_TOL for a in ang_walls)
    # (d) mirrored shoots about the profile minimum
    n = np.array([-cs.line_direction[1], cs.line_direction[0]])
    anchor = grid.points[cs.nodes[np.argmin(np.hypot(*(grid.points[cs.nodes] - cs.line_point).T))]]
    full = reconstruct_profile(fld, n, np.ones(grid.n_points, dtype=bool), anchor)
    band = full.t[np.abs(full.t - cs.line_point @ n) <= 10 * h]
    fine = np.linspace(band.min(), band.max(), 2001)
    t_star = float(fine[np.argmin(full(fine))])
    for _ in range(20):
        d1s, d2s = float(full.spline(t_star, 1)), float(full.spline(t_star, 2))
        if d2s <= 0:
            break
        t_star -= d1s / d2s
    u_star = float(full(t_star))
    span = float(np.max(np.abs(grid.points @ n - t_star)))
    steps = max(int(np.ceil(span / 1e-4)), 8)
    sol = shoot(fld.profile, fld.source, u_star, 0.0, (0.0, span), span / steps)
    ref = CubicSpline(sol.t, sol.u)
    mism = []
    for mk in masks:
        P = grid.points[mk]
        s = np.abs(P @ n - t_star)
        ok = s <= sol.t[-1]
        mism.append(float(np.max(np.abs(fld.values[mk][ok] - ref(s[ok])))))
    clause_d = all(v <= profile_tol for v in mism)
    return GlueReport(
        {"a": bool(clause_a), "b": bool(clause_b), "c": bool(clause_c), "d": bool(clause_d)},
        {"wall_min_grad": wall_min, "wall_threshold": 10 * cs.tol,
         "side_is_1d": [r.is_1d for r in reps], "side_sup_II2": [r.sup_II2 for r in reps],
         "direction_angle": ang_dirs, "wall_angles": ang_walls,
         "crit": cs.summary(), "u_min": u_star, "t_min": t_star, "profile_mismatch": mism})
