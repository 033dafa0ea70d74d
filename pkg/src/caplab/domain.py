"""Planar domains with labelled boundary components and cut-cell grids.

A domain is the region ``max_k level_k(x, y) < 0`` for a list of boundary
pieces.  Every piece carries a component id (``ARTIFICIAL`` for the sides
introduced by truncating an unbounded domain), an analytic inward normal and
a parametrisation used for sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .errors import ConfigError

ARTIFICIAL = -1
INTERIOR = 0
DIRS = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)])
OPPOSITE = np.array([1, 0, 3, 2])


@dataclass(frozen=True)
class BoundaryComponent:
    id: int
    b: Union[float, Callable] = 0.0
    c: Optional[float] = None

    def value(self, x, y):
        if callable(self.b):
            return np.asarray(self.b(x, y), dtype=float)
        return np.full(np.shape(x), float(self.b))

    @property
    def constant(self) -> bool:
        return not callable(self.b)


@dataclass(frozen=True)
class Piece:
    component: int
    level: Callable
    normal: Callable
    curve: Callable
    s_window: tuple
    unbounded: bool = False


def _unit(vx, vy):
    n = np.hypot(vx, vy)
    return vx / n, vy / n


def _deriv(phi, step=1e-6):
    return lambda s: (phi(s + step) - phi(s - step)) / (2 * step)


@dataclass(frozen=True, eq=False)
class DomainSpec2D:
    """Shape name, shape parameters and boundary components."""

    shape: str
    params: dict
    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate component ids {ids}")
        expected = set(self.component_ids())
        unknown = set(ids) - expected
        if unknown:
            raise ConfigError(f"{self.shape}: unknown component ids {sorted(unknown)}")
        missing = [BoundaryComponent(i) for i in sorted(expected - set(ids))]
        comps = tuple(sorted(tuple(self.components) + tuple(missing), key=lambda c: c.id))
        object.__setattr__(self, "components", comps)
        p = self.params
        if self.shape == "annulus" and not 0 < p["R_in"] < p["R_out"]:
            raise ConfigError("annulus requires 0 < R_in < R_out")
        if self.shape == "slab":
            s = np.linspace(*p["x_extent"], 512)
            if np.any(p["phi1"](s) >= p["phi2"](s)):
                raise ConfigError("slab requires phi1 < phi2 on the extent")
        sizes = {"strip": [p.get("T", 1.0)], "disk": [p.get("R", 1.0)],
                 "rectangle": [p.get("b", 1) - p.get("a", 0), p.get("d", 1) - p.get("c", 0)]}
        if min(sizes.get(self.shape, [1.0])) <= 0:
            raise ConfigError(f"{self.shape}: nonpositive size")

    # ----------------------------------------------------------- builders
    @staticmethod
    def strip(T, y_extent=(-2.0, 2.0), b=(0.0, 0.0), c=(None, None)):
        return DomainSpec2D("strip", {"T": float(T), "y_extent": tuple(map(float, y_extent))},
                            (BoundaryComponent(1, b[0], c[0]), BoundaryComponent(2, b[1], c[1])))

    @staticmethod
    def rectangle(a, b, c, d, data=0.0):
        return DomainSpec2D("rectangle", {"a": a, "b": b, "c": c, "d": d},
                            (BoundaryComponent(1, data),))

    @staticmethod
    def disk(R, center=(0.0, 0.0), b=0.0):
        return DomainSpec2D("disk", {"R": float(R), "center": tuple(map(float, center))},
                            (BoundaryComponent(1, b),))

    @staticmethod
    def annulus(R_in, R_out, center=(0.0, 0.0), b=(0.0, 0.0)):
        return DomainSpec2D("annulus", {"R_in": float(R_in), "R_out": float(R_out),
                                        "center": tuple(map(float, center))},
                            (BoundaryComponent(1, b[0]), BoundaryComponent(2, b[1])))

    @staticmethod
    def epigraph(phi, x_extent=(-2.0, 2.0), depth=2.0, b=0.0, dphi=None):
        return DomainSpec2D("epigraph", {"phi": phi, "dphi": dphi or _deriv(phi),
                                         "x_extent": tuple(x_extent), "depth": depth},
                            (BoundaryComponent(1, b),))

    @staticmethod
    def slab(phi1, phi2, x_extent=(-2.0, 2.0), b=(0.0, 0.0), dphi1=None, dphi2=None):
        return DomainSpec2D("slab", {"phi1": phi1, "phi2": phi2,
                                     "dphi1": dphi1 or _deriv(phi1),
                                     "dphi2": dphi2 or _deriv(phi2),
                                     "x_extent": tuple(x_extent)},
                            (BoundaryComponent(1, b[0]), BoundaryComponent(2, b[1])))

    def with_values(self, b: dict) -> "DomainSpec2D":
        comps = tuple(BoundaryComponent(c.id, b.get(c.id, c.b), c.c) for c in self.components)
        return DomainSpec2D(self.shape, self.params, comps)

    # ------------------------------------------------------------ queries
    def component_ids(self):
        return {"strip": [1, 2], "rectangle": [1], "disk": [1], "annulus": [1, 2],
                "epigraph": [1], "slab": [1, 2]}[self.shape]

    def component(self, cid) -> BoundaryComponent:
        for c in self.components:
            if c.id == cid:
                return c
        raise KeyError(f"unknown component id {cid}")

    def shape_pieces(self) -> list:
        p, s = self.params, self.shape
        if s == "strip":
            T, win = p["T"], p["y_extent"]
            return [
                Piece(1, lambda x, y: -x + 0 * y, lambda x, y: (1.0 + 0 * x, 0.0 * x),
                      lambda t: (0.0 * t, t), win, True),
                Piece(2, lambda x, y: x - T + 0 * y, lambda x, y: (-1.0 + 0 * x, 0.0 * x),
                      lambda t: (T + 0.0 * t, t), win, True),
            ]
        if s == "rectangle":
            a, b, c, d = p["a"], p["b"], p["c"], p["d"]
            return [
                Piece(1, lambda x, y: a - x + 0 * y, lambda x, y: (1.0 + 0 * x, 0 * x),
                      lambda t: (a + 0 * t, t), (c, d)),
                Piece(1, lambda x, y: x - b + 0 * y, lambda x, y: (-1.0 + 0 * x, 0 * x),
                      lambda t: (b + 0 * t, t), (c, d)),
                Piece(1, lambda x, y: c - y + 0 * x, lambda x, y: (0 * x, 1.0 + 0 * x),
                      lambda t: (t, c + 0 * t), (a, b)),
                Piece(1, lambda x, y: y - d + 0 * x, lambda x, y: (0 * x, -1.0 + 0 * x),
                      lambda t: (t, d + 0 * t), (a, b)),
            ]
        if s in ("disk", "annulus"):
            cx, cy = p["center"]
            r = lambda x, y: np.hypot(x - cx, y - cy)
            out_n = lambda x, y: _unit(-(x - cx), -(y - cy))
            in_n = lambda x, y: _unit(x - cx, y - cy)

            def circle(R):
                return lambda t: (cx + R * np.cos(t), cy + R * np.sin(t))

            if s == "disk":
                R = p["R"]
                return [Piece(1, lambda x, y: r(x, y) - R, out_n, circle(R), (0.0, 2 * np.pi))]
            Ri, Ro = p["R_in"], p["R_out"]
            return [Piece(1, lambda x, y: Ri - r(x, y), in_n, circle(Ri), (0.0, 2 * np.pi)),
                    Piece(2, lambda x, y: r(x, y) - Ro, out_n, circle(Ro), (0.0, 2 * np.pi))]
        if s == "epigraph":
            phi, dphi = p["phi"], p["dphi"]
            return [Piece(1, lambda x, y: phi(y) - x, lambda x, y: _unit(1.0 + 0 * y, -dphi(y)),
                          lambda t: (phi(t), t), p["x_extent"], True)]
        if s == "slab":
            f1, f2, d1, d2 = p["phi1"], p["phi2"], p["dphi1"], p["dphi2"]
            return [
                Piece(1, lambda x, y: f1(y) - x, lambda x, y: _unit(1.0 + 0 * y, -d1(y)),
                      lambda t: (f1(t), t), p["x_extent"], True),
                Piece(2, lambda x, y: x - f2(y), lambda x, y: _unit(-1.0 + 0 * y, d2(y)),
                      lambda t: (f2(t), t), p["x_extent"], True),
            ]
        raise ConfigError(f"unknown shape {s!r}")

    def truncation_pieces(self) -> list:
        p, s = self.params, self.shape
        if s in ("strip", "epigraph", "slab"):
            lo, hi = p["y_extent"] if s == "strip" else p["x_extent"]
            pieces = [
                Piece(ARTIFICIAL, lambda x, y: lo - y + 0 * x, lambda x, y: (0 * x, 1.0 + 0 * x),
                      lambda t: (t, lo + 0 * t), (0, 0)),
                Piece(ARTIFICIAL, lambda x, y: y - hi + 0 * x, lambda x, y: (0 * x, -1.0 + 0 * x),
                      lambda t: (t, hi + 0 * t), (0, 0)),
            ]
            if s == "epigraph":
                top = self.bbox()[1]
                pieces.append(Piece(ARTIFICIAL, lambda x, y: x - top + 0 * y,
                                    lambda x, y: (-1.0 + 0 * x, 0 * x),
                                    lambda t: (top + 0 * t, t), (lo, hi)))
            return pieces
        return []

    def pieces(self):
        return self.shape_pieces() + self.truncation_pieces()

    def level(self, x, y):
        return np.max([pc.level(x, y) for pc in self.pieces()], axis=0)

    def shape_level(self, x, y):
        """Level function of the untruncated domain."""
        return np.max([pc.level(x, y) for pc in self.shape_pieces()], axis=0)

    def bbox(self):
        p, s = self.params, self.shape
        if s == "strip":
            return (0.0, p["T"], *p["y_extent"])
        if s == "rectangle":
            return (p["a"], p["b"], p["c"], p["d"])
        if s in ("disk", "annulus"):
            R = p.get("R", p.get("R_out"))
            cx, cy = p["center"]
            return (cx - R, cx + R, cy - R, cy + R)
        ys = np.linspace(*p["x_extent"], 2001)
        if s == "epigraph":
            ph = p["phi"](ys)
            return (float(ph.min()), float(ph.max()) + p["depth"], *p["x_extent"])
        return (float(p["phi1"](ys).min()), float(p["phi2"](ys).max()), *p["x_extent"])

    def classify_boundary_point(self, x, y, h):
        """Component id and inward normal of the piece active at ``(x, y)``."""
        pcs = self.pieces()
        vals = np.array([float(pc.level(x, y)) for pc in pcs])
        cand = np.nonzero(vals >= vals.max() - 1e-9 * h)[0]
        art = [k for k in cand if pcs[k].component == ARTIFICIAL]
        k = art[0] if art else cand[0]
        nx, ny = pcs[k].normal(np.float64(x), np.float64(y))
        return pcs[k].component, (float(nx), float(ny))


# ------------------------------------------------------------------- grid

@dataclass(frozen=True, eq=False)
class Grid:
    """Cut-cell grid on the lattice ``(i0 + i, j0 + j) * h``.

    Points are ordered: interior lattice nodes, on-lattice boundary nodes,
    then off-lattice boundary points where a grid line crosses the boundary.
    ``arm_idx[k, d]`` is the neighbouring point of point ``k`` in direction
    ``d`` (E, W, N, S) at distance ``arm_len[k, d]``, or -1.
    """

    spec: DomainSpec2D
    h: float
    i0: int
    j0: int
    shape: tuple
    points: np.ndarray
    n_interior: int
    component: np.ndarray
    normal: np.ndarray
    ij: np.ndarray
    arm_idx: np.ndarray
    arm_len: np.ndarray
    parent: np.ndarray
    parent_dir: np.ndarray
    lattice_index: np.ndarray

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def xs(self):
        return (self.i0 + np.arange(self.shape[0])) * self.h

    @property
    def ys(self):
        return (self.j0 + np.arange(self.shape[1])) * self.h

    @property
    def is_boundary(self):
        return self.component != INTERIOR

    def boundary_indices(self, include_artificial=False):
        mask = self.component > 0
        if include_artificial:
            mask |= self.component == ARTIFICIAL
        return np.nonzero(mask)[0]

    def lattice(self, values, fill=np.nan):
        """Scatter point values onto the ``(nx, ny)`` lattice array."""
        out = np.full(self.shape, fill, dtype=float)
        on = self.ij[:, 0] >= 0
        out[self.ij[on, 0], self.ij[on, 1]] = np.asarray(values, dtype=float)[on]
        return out

    def interior_lattice_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        k = np.arange(self.n_interior)
        m[self.ij[k, 0], self.ij[k, 1]] = True
        return m

    def lattice_coords(self):
        return np.meshgrid(self.xs, self.ys, indexing="ij")


def build_grid(spec: DomainSpec2D, h: float) -> Grid:
    """Lattice nodes inside the domain plus boundary points on grid lines."""
    if not h > 0:
        raise ValueError("h must be positive")
    xmin, xmax, ymin, ymax = spec.bbox()
    i0 = int(math.floor(xmin / h)) - 1
    j0 = int(math.floor(ymin / h)) - 1
    nx = int(math.ceil(xmax / h)) + 2 - i0
    ny = int(math.ceil(ymax / h)) + 2 - j0
    X, Y = np.meshgrid((i0 + np.arange(nx)) * h, (j0 + np.arange(ny)) * h, indexing="ij")
    L = spec.level(X, Y)
    eps = 1e-9 * h
    inside = L < -eps
    onb = np.abs(L) <= eps
    if not inside.any():
        raise ConfigError("degenerate domain: empty interior")

    lattice_index = -np.ones((nx, ny), dtype=int)
    ii, jj = np.nonzero(inside)
    bi, bj = np.nonzero(onb)
    n_int = ii.size
    lattice_index[ii, jj] = np.arange(n_int)
    lattice_index[bi, bj] = n_int + np.arange(bi.size)

    pts = [np.column_stack([X[ii, jj], Y[ii, jj]]), np.column_stack([X[bi, bj], Y[bi, bj]])]
    ij = [np.column_stack([ii, jj]), np.column_stack([bi, bj])]
    n_lat = n_int + bi.size
    arm_idx = -np.ones((n_lat, 4), dtype=int)
    arm_len = np.full((n_lat, 4), np.nan)
    all_i = np.concatenate([ii, bi])
    all_j = np.concatenate([jj, bj])
    for d, (di, dj) in enumerate(DIRS):
        ni, nj = all_i + di, all_j + dj
        ok = (ni >= 0) & (ni < nx) & (nj >= 0) & (nj < ny)
        nb = np.full(all_i.size, -1)
        nb[ok] = lattice_index[ni[ok], nj[ok]]
        arm_idx[:, d] = nb
        arm_len[nb >= 0, d] = h

    # off-lattice crossings from interior nodes
    cut_pts, cut_parent, cut_dir, cut_len = [], [], [], []
    missing = np.nonzero(arm_idx[:n_int] < 0)
    for k, d in zip(*missing):
        x0, y0 = pts[0][k]
        ex, ey = DIRS[d]
        g = lambda s: float(spec.level(x0 + s * ex, y0 + s * ey))
        s = brentq(g, 0.0, h, xtol=1e-15 * max(1.0, h), rtol=4 * np.finfo(float).eps)
        s = max(s, 1e-8 * h)
        cut_pts.append((x0 + s * ex, y0 + s * ey))
        cut_parent.append(k)
        cut_dir.append(d)
        cut_len.append(s)
    n_cut = len(cut_pts)
    N = n_lat + n_cut
    for m, (k, d, s) in enumerate(zip(cut_parent, cut_dir, cut_len)):
        arm_idx[k, d] = n_lat + m
        arm_len[k, d] = s
    arm_idx = np.vstack([arm_idx, -np.ones((n_cut, 4), dtype=int)])
    arm_len = np.vstack([arm_len, np.full((n_cut, 4), np.nan)])
    for m, (k, d, s) in enumerate(zip(cut_parent, cut_dir, cut_len)):
        arm_idx[n_lat + m, OPPOSITE[d]] = k
        arm_len[n_lat + m, OPPOSITE[d]] = s

    points = np.vstack(pts + ([np.array(cut_pts)] if n_cut else []))
    ij_all = np.vstack(ij + ([-np.ones((n_cut, 2), dtype=int)] if n_cut else []))
    component = np.zeros(N, dtype=int)
    normal = np.full((N, 2), np.nan)
    for k in range(n_int, N):
        cid, nrm = spec.classify_boundary_point(points[k, 0], points[k, 1], h)
        component[k] = cid
        normal[k] = nrm
    parent = -np.ones(N, dtype=int)
    parent_dir = -np.ones(N, dtype=int)
    parent[n_lat:] = cut_parent
    parent_dir[n_lat:] = cut_dir

    for cid in spec.component_ids():
        if np.count_nonzero(component == cid) < 8:
            raise ConfigError(f"h={h} too coarse: component {cid} has fewer than 8 boundary nodes")
    return Grid(spec, float(h), i0, j0, (nx, ny), points, n_int, component, normal,
                ij_all, arm_idx, arm_len, parent, parent_dir, lattice_index)


# ------------------------------------------------------------ diagnostics

@dataclass(frozen=True)
class TransverseReport:
    signs: dict
    verdict: bool
    v: tuple


def mildly_transverse(spec: DomainSpec2D, v, components=None, n: int = 400,
                      tol: float = 1e-12) -> TransverseReport:
    """Sign pattern of ``<eta, v>`` sampled on each listed component."""
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValueError("v must be a unit vector")
    ids = spec.component_ids() if components is None else list(components)
    for cid in ids:
        if cid not in spec.component_ids():
            raise KeyError(f"unknown component id {cid}")
    signs = {}
    for cid in ids:
        vals = []
        for pc in spec.shape_pieces():
            if pc.component != cid:
                continue
            s = np.linspace(*pc.s_window, n)
            x, y = pc.curve(s)
            nx, ny = pc.normal(np.asarray(x, float), np.asarray(y, float))
            vals.append(nx * v[0] + ny * v[1])
        vals = np.concatenate(vals)
        pos, neg = np.any(vals > tol), np.any(vals < -tol)
        signs[cid] = "mixed" if pos and neg else "+" if pos else "-" if neg else "0"
    return TransverseReport(signs, all(s != "mixed" for s in signs.values()), tuple(v))


def boundary_measure(spec: DomainSpec2D, component_ids, R: float, center=(0.0, 0.0),
                     n: int = 20001) -> float:
    """Length of the listed components inside ``B_R(center)`` (untruncated)."""
    total = 0.0
    for pc in spec.shape_pieces():
        if pc.component not in component_ids:
            continue
        lo, hi = (center[1] - R - 1.0, center[1] + R + 1.0) if pc.unbounded else pc.s_window
        s = np.linspace(lo, hi, n)
        x, y = pc.curve(s)
        x = np.broadcast_to(np.asarray(x, float), s.shape)
        y = np.broadcast_to(np.asarray(y, float), s.shape)
        seg = np.hypot(np.diff(x), np.diff(y))
        mx, my = 0.5 * (x[1:] + x[:-1]), 0.5 * (y[1:] + y[:-1])
        inside = np.hypot(mx - center[0], my - center[1]) <= R
        total += float(seg[inside].sum())
    return total


def _x_interval(spec: DomainSpec2D, y):
    """``(lo, hi)`` of the untruncated section ``{x : (x, y) in Omega}`` for graph-type shapes."""
    p = spec.params
    if spec.shape == "strip":
        return np.zeros_like(y), np.full_like(y, p["T"])
    if spec.shape == "slab":
        return p["phi1"](y), p["phi2"](y)
    return p["phi"](y), np.full_like(y, np.inf)


def ball_area(spec: DomainSpec2D, R: float, center=(0.0, 0.0), h: Optional[float] = None,
              truncated: bool = False) -> float:
    """Area of ``Omega cap B_R(center)``.

    Strips, slabs and epigraphs of the untruncated shape are integrated row
    by row from exact chord lengths; other cases count lattice nodes of
    spacing ``h`` (default ``R / 400``).
    """
    if spec.shape in ("strip", "slab", "epigraph") and not truncated:
        n = 20001 if h is None else max(int(math.ceil(2 * R / h)), 2001)
        t = np.linspace(-1.0, 1.0, n)
        y = center[1] + R * np.sin(0.5 * np.pi * t)
        half = np.sqrt(np.maximum(R * R - (y - center[1]) ** 2, 0.0))
        lo, hi = _x_interval(spec, y)
        chord = np.clip(np.minimum(hi, center[0] + half) - np.maximum(lo, center[0] - half), 0.0, None)
        dy = 0.5 * np.pi * R * np.cos(0.5 * np.pi * t)
        return float(trapezoid(chord * dy, t))
    h = R / 400.0 if h is None else h
    n = int(math.ceil(R / h))
    g = (np.arange(-n, n + 1)) * h
    X, Y = np.meshgrid(center[0] + g, center[1] + g, indexing="ij")
    L = spec.level(X, Y) if truncated else spec.shape_level(X, Y)
    inside = (L < 0) & (np.hypot(X - center[0], Y - center[1]) <= R)
    return float(np.count_nonzero(inside)) * h * h


@dataclass(frozen=True)
class VolumeGrowthReport:
    R: np.ndarray
    area: np.ndarray
    ratio: np.ndarray
    consistent: bool
    exponent: float
    warnings: tuple


def volume_growth(spec: DomainSpec2D, R_list, h: Optional[float] = None) -> VolumeGrowthReport:
    """Areas ``|Omega cap B_R|`` and the monotone-ratio test for ``o(R^2 log R)``."""
    R = np.asarray(R_list, dtype=float)
    if np.any(np.diff(R) <= 0) or np.any(R <= 1):
        raise ValueError("R_list must be increasing and > 1")
    xmin, xmax, ymin, ymax = spec.bbox()
    notes = []
    for r in R:
        if spec.truncation_pieces() and (-r < ymin or r > ymax):
            notes.append(f"R={r:g} exceeds the truncation window; measured on the untruncated shape")
    area = np.array([ball_area(spec, r, h=h) for r in R])
    ratio = area / (R ** 2 * np.log(R))
    tail = ratio[-3:]
    consistent = bool(np.all(np.diff(tail) < 0))
    expo = float(np.polyfit(np.log(R), np.log(area), 1)[0]) if R.size >= 2 else float("nan")
    return VolumeGrowthReport(R, area, ratio, consistent, expo, tuple(notes))
