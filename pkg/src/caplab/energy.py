"""Energy growth diagnostics: cutoff families, energy integrals and calibration bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .domain import ARTIFICIAL, ball_area, boundary_measure, volume_growth
from .errors import InapplicableError
from .fields import GridField, interior_gradient
from .linearized import A_tensor
from .operators import check_mean_curvature_type, sup_t_a
from .solver import partial_star, quadrature_weights

CASES = ("i", "ii", "iii", "iv", "v", "vi")
DISPATCH_ORDER = ("ii", "iii", "i", "v", "iv", "vi")


# ------------------------------------------------------ logarithmic cutoffs

@dataclass(frozen=True)
class LogCutoff:
    """Radial cutoff ``1`` on ``[0, R]``, ``2 (1 - psi(t) / psi(r))`` on ``[R, r]``, ``0`` after.

    ``r`` is stored through ``log_r`` since it is astronomically large for
    moderate ``R``.
    """

    R: float
    log_r: float
    psi_R: float
    psi_r: float
    theta: Callable
    R1: float

    @property
    def r(self) -> float:
        return math.exp(self.log_r) if self.log_r < 700 else math.inf

    def psi(self, t):
        return _psi(self.theta, self.R1, np.log(np.asarray(t, dtype=float)))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lt = np.log(np.maximum(t, 1e-300))
        mid = (t > self.R) & (lt < self.log_r)
        out = np.where(t <= self.R, 1.0, 0.0)
        if np.any(mid):
            out = out.astype(float)
            out[mid] = 2.0 * (1.0 - _psi(self.theta, self.R1, lt[mid]) / self.psi_r)
        return out if out.ndim else float(out)

    def derivative(self, t):
        """``psi_j'(t) = -2 / (psi(r) t theta(t))`` on ``(R, r)``, else 0."""
        t = np.asarray(t, dtype=float)
        lt = np.log(np.maximum(t, 1e-300))
        mid = (t > self.R) & (lt < self.log_r)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = -2.0 / (self.psi_r * t * self.theta(t))
        return np.where(mid, d, 0.0)

    def second_derivative(self, t, step=1e-6):
        t = np.asarray(t, dtype=float)
        return (self.derivative(t * (1 + step)) - self.derivative(t * (1 - step))) / (2 * step * t)

    def bound(self) -> float:
        """``8 / (psi(r)^2 theta(R)) + 4 / psi(r)``."""
        return 8.0 / (self.psi_r ** 2 * float(self.theta(self.R))) + 4.0 / self.psi_r


def _psi(theta, R1, log_t):
    """``int_{R1}^t ds / (s theta(s))`` in the variable ``v = log s``."""
    log_t = np.atleast_1d(np.asarray(log_t, dtype=float))
    g = lambda v: 1.0 / float(theta(math.exp(v)))
    lo = math.log(R1)
    out = np.array([quad(g, lo, v, limit=200, epsabs=1e-13, epsrel=1e-12)[0] for v in log_t])
    return out if out.size > 1 else float(out[0])


def log_cutoff_sequence(R_list, theta: Callable = np.log, R1: float = math.e) -> list:
    """Cutoffs with ``psi(r_j) = 2 psi(R_j)``; ``r_j`` found by bisection in ``log t`` (tol 1e-10)."""
    R = np.asarray(R_list, dtype=float)
    if np.any(R <= R1):
        raise ValueError(f"all R_j must exceed R1 = {R1:g}")
    if np.any(np.diff(R) <= 0):
        raise ValueError("R_list must be increasing")
    out = []
    for Rj in R:
        pR = _psi(theta, R1, math.log(Rj))
        target = 2.0 * pR
        lo = math.log(Rj)
        hi = 2.0 * lo
        while _psi(theta, R1, min(hi, 700.0)) < target:
            if hi >= 700.0:
                raise ValueError("psi does not reach 2 psi(R) below t = exp(700); the integral of "
                                 "1/(s theta) converges or grows too slowly")
            lo, hi = hi, 2.0 * hi
        hi = min(hi, 700.0)
        while hi - lo > 1e-10 * max(1.0, lo):
            mid = 0.5 * (lo + hi)
            if _psi(theta, R1, mid) < target:
                lo = mid
            else:
                hi = mid
        out.append(LogCutoff(float(Rj), 0.5 * (lo + hi), pR, target, theta, float(R1)))
    return out


def strip_cutoff_energy(cut: LogCutoff, T: float = 1.0, origin_x: float = 0.0) -> float:
    """``int_{0<x<T} |grad (psi_j o r)|^2`` by nested quadrature, ``r = |(x - origin_x, y)|``.

    The inner integral runs over ``log |y|`` so that the astronomically large
    outer radius is harmless.
    """
    logR, logr = math.log(cut.R), cut.log_r

    def inner(x):
        x = abs(x - origin_x)
        # y-range where R < r < r_j
        ylo = math.sqrt(max(cut.R ** 2 - x * x, 0.0))
        s_lo = math.log(ylo) if ylo > 0 else logR - 60.0
        s_hi = logr if x == 0 else logr + 0.5 * math.log1p(-min((x * math.exp(-logr)) ** 2, 0.5))

        def g(s):
            y = math.exp(s)
            lr = s + 0.5 * math.log1p((x / y) ** 2)
            # psi'(r)^2 * y with psi' = -2 / (psi_r r theta(r))
            th = float(cut.theta(math.exp(lr))) if lr < 700 else lr
            return 4.0 / (cut.psi_r ** 2 * th ** 2) * y * math.exp(-2 * lr)

        return 2.0 * quad(g, s_lo, s_hi, limit=400, epsabs=1e-14, epsrel=1e-11)[0]

    return quad(inner, 0.0, T, limit=200, epsabs=1e-13, epsrel=1e-10)[0]


def log_cutoff_report(R_list, T: float = 1.0, theta: Callable = np.log,
                      R1: float = math.e) -> EnergyReport:
    """Energies of the log-cutoffs for ``f = 1`` on the strip ``0 < x < T`` against
    ``8 / (psi(r_j)^2 theta(R_j)) + 4 / psi(r_j)``."""
    cuts = log_cutoff_sequence(R_list, theta, R1)
    E = [strip_cutoff_energy(c, T) for c in cuts]
    pairs = tuple(CalibrationPair(c.R, e, c.bound(), True, False) for c, e in zip(cuts, E))
    dec = all(b < a for a, b in zip(E, E[1:]))
    name = getattr(theta, "__name__", "theta")
    return EnergyReport(f"log-cutoff:theta={name},R1={R1:g}", tuple(E), None, pairs,
                        dec and all(q.holds for q in pairs))


# --------------------------------------------------------- energy integrals

def _point_values(fld: GridField, phi):
    if isinstance(phi, GridField):
        return phi.values
    if callable(phi):
        return np.asarray(phi(fld.grid.points[:, 0], fld.grid.points[:, 1]), dtype=float) \
            * np.ones(fld.grid.n_points)
    return np.asarray(phi, dtype=float)


def energy_integral(fld: GridField, phi) -> float:
    """Midpoint rule for ``int |grad u|^2 <A(grad u) grad phi, grad phi>`` over interior nodes."""
    grid = fld.grid
    n = grid.n_interior
    pv = _point_values(fld, phi)
    du = interior_gradient(grid, fld.values)
    dp = interior_gradient(grid, pv)
    A = A_tensor(fld.profile, du)
    q = np.einsum("ki,kij,kj->k", dp, A, dp)
    w = quadrature_weights(grid)[:n]
    return float(np.sum(w * np.sum(du * du, axis=1) * q))


def rho(fld: GridField, origin=(0.0, 0.0)) -> np.ndarray:
    x, y = fld.grid.points.T
    return np.sqrt((x - origin[0]) ** 2 + (y - origin[1]) ** 2 + fld.values ** 2)


def rho_cutoff(fld: GridField, R: float, origin=(0.0, 0.0)) -> GridField:
    """``1`` for ``rho <= sqrt(R)``, ``2 log(R/rho) / log R`` up to ``R``, then ``0``."""
    if not R > 1:
        raise ValueError("rho cutoff needs R > 1")
    p = rho(fld, origin)
    with np.errstate(divide="ignore"):
        mid = 2.0 * np.log(R / p) / math.log(R)
    vals = np.where(p <= math.sqrt(R), 1.0, np.where(p >= R, 0.0, mid))
    return GridField(fld.grid, vals, fld.profile, fld.source, {"cutoff": f"rho:{R:g}"})


# ------------------------------------------------------------- calibration

@dataclass(frozen=True)
class CalibrationPair:
    R: float
    lhs: float
    rhs: float
    above_threshold: bool
    truncated: bool

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


@dataclass(frozen=True)
class EnergyReport:
    cutoff: str
    energies: tuple
    case: Optional[str]
    pairs: tuple
    verdict: bool
    constant: float = float("nan")
    threshold: float = float("nan")
    notes: tuple = ()
    hypotheses: dict = field(default_factory=dict)


def _omega0_mask(fld, omega0):
    grid = fld.grid
    x, y = grid.points.T
    if omega0 is None:
        return np.ones(grid.n_points, dtype=bool)
    if callable(omega0):
        return np.asarray(omega0(x, y), dtype=bool)
    return np.asarray(omega0, dtype=bool)


@dataclass(frozen=True)
class Hypotheses:
    """Measured facts about ``u`` and ``f(u)`` on ``Omega_0``."""

    f_max: float
    f_min: float
    inf_u: float
    sup_abs_u: float
    star_components: tuple
    star_values: dict
    star_constant: bool
    star_value: Optional[float]
    bounded_u: bool
    notes: tuple


def measure_hypotheses(fld: GridField, omega0=None, facts: Optional[dict] = None) -> Hypotheses:
    """Signs and bounds of ``f(u)``, ``inf u`` and the data on ``d_star Omega``.

    A boundary component belongs to ``d_star Omega`` when ``|d_eta u|``
    exceeds ``10 h`` somewhere on it.  Boundedness of ``u`` is
    asserted for bounded shapes; on truncated windows it is read from
    ``facts["u_bounded"]`` or, failing that, from the absence of growth
    between the inner half of the window and the whole window.
    """
    facts = facts or {}
    grid = fld.grid
    m = _omega0_mask(fld, omega0) & (grid.component != ARTIFICIAL)
    u = fld.values[m]
    fu = np.asarray(fld.source.f(u), dtype=float) * np.ones(u.size)
    star = partial_star(fld)
    vals = {}
    for cid in star:
        k = (grid.component == cid) & m
        if k.any():
            vals[cid] = (float(fld.values[k].min()), float(fld.values[k].max()))
    allv = [v for pair in vals.values() for v in pair]
    scale = 1.0 + (max(map(abs, allv)) if allv else 0.0)
    const = bool(allv) and (max(allv) - min(allv)) <= 1e-9 * scale
    star_value = float(np.mean(allv)) if const else None
    if not vals:
        const, star_value = True, None
    notes = []
    if "u_bounded" in facts:
        bounded = bool(facts["u_bounded"])
        notes.append("u_bounded asserted by the user")
    elif not grid.spec.truncation_pieces():
        bounded = True
    else:
        y = grid.points[m, 1]
        ymid = 0.5 * (y.min() + y.max())
        inner = np.abs(y - ymid) <= 0.25 * (y.max() - y.min())
        s_in, s_all = float(np.max(np.abs(u[inner]))), float(np.max(np.abs(u)))
        bounded = s_all <= s_in * (1 + 1e-8) + 1e-12
        notes.append(f"u_bounded inferred from the window: sup|u| inner {s_in:.6g}, whole {s_all:.6g}")
    return Hypotheses(float(fu.max()), float(fu.min()), float(u.min()), float(np.max(np.abs(u))),
                      star, vals, const, star_value, bounded, tuple(notes))


def case_hypotheses(H: Hypotheses, case: str, b: Optional[float] = None, h: float = 0.0) -> dict:
    """Boolean status of every hypothesis of a calibration case (finite-window surrogates)."""
    tol = 1e-12
    out = {}
    if case in ("i", "ii"):
        out["f_nonpositive"] = H.f_max <= tol
        out["f_bounded_below"] = bool(np.isfinite(H.f_min))
        out["inf_u_finite"] = bool(np.isfinite(H.inf_u))
        if case == "ii":
            out["u_constant_on_star_boundary"] = H.star_constant
        else:
            out["u_bounded_on_star_boundary"] = True
            out["b_at_least_inf_u"] = b is None or b >= H.inf_u - tol
    elif case == "iii":
        out["f_nonpositive"] = H.f_max <= tol
        out["u_constant_on_star_boundary"] = H.star_constant
        bval = H.star_value if b is None else b
        out["star_value_equals_inf_u"] = (bval is not None
                                          and abs(bval - H.inf_u) <= max(1e-9, 10 * h * h))
    elif case in ("iv", "v"):
        out["u_constant_on_star_boundary"] = H.star_constant
        if case == "iv":
            out["f_bounded"] = bool(np.isfinite(H.f_min) and np.isfinite(H.f_max))
        else:
            out["u_bounded"] = H.bounded_u
    elif case == "vi":
        out["f_nonpositive"] = H.f_max <= tol
    else:
        raise ValueError(f"unknown case {case!r}")
    return out


def _lhs(fld, m, p, R):
    """``int_{Omega0 cap {rho <= R}} a(|grad u|) |grad u|^2`` over interior nodes."""
    n = fld.grid.n_interior
    du = interior_gradient(fld.grid, fld.values)
    g2 = np.sum(du * du, axis=1)
    dens = fld.profile.a(np.sqrt(g2)) * g2
    w = quadrature_weights(fld.grid)[:n]
    sel = m[:n] & (p[:n] <= R)
    return float(np.sum((w * dens)[sel]))


def _window_contains(spec, R, origin):
    if not spec.truncation_pieces():
        return True
    if spec.shape in ("strip", "slab", "epigraph"):
        lo, hi = spec.params["y_extent"] if spec.shape == "strip" else spec.params["x_extent"]
        return origin[1] - R >= lo and origin[1] + R <= hi
    return True


def calibration_bound(fld: GridField, omega0=None, case: str = "ii", b: Optional[float] = None,
                      R_list=(2.0, 4.0, 8.0), origin=(0.0, 0.0), facts=None) -> EnergyReport:
    """Compare ``int_{Omega0 cap {rho <= R}} a |grad u|^2`` with the assembled calibration bound.

    The right-hand sides use ``S = sup t a(t)``, ``C0 = sup |f(u)|`` over
    ``Omega0`` and areas of ``Omega0 cap B_{kR}`` (exact for the untruncated
    shape when ``omega0`` is None):

    - (i)   ``(S + C0 (b - inf u)) |B_4R| + S sup|u - b| H1(F_b cap B_4R)``
    - (ii)  ``(S + C0 (b - inf u)) |B_4R|``, ``b`` the value on ``d_star Omega``
    - (iii) ``S |B_4R|``
    - (iv), (v) ``(S + 3 C0 min(2R, sup|u - b|)) |B_8R|``
    - (vi)  ``2 S (|B_2R| + R H1(d_star Omega cap B_2R))``

    Thresholds on ``R`` follow from the same chain and are reported.
    """
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}")
    grid, spec = fld.grid, fld.grid.spec
    H = measure_hypotheses(fld, omega0, facts)
    hyp = case_hypotheses(H, case, b, grid.h)
    failed = {k: v for k, v in hyp.items() if not v}
    if failed:
        raise InapplicableError(f"energy: case ({case}) hypotheses fail: {', '.join(failed)}", hyp)
    m = _omega0_mask(fld, omega0)
    p = rho(fld, origin)
    S = sup_t_a(fld.profile)
    if not np.isfinite(S):
        raise InapplicableError("energy: sup t a(t) is infinite", {"ta_bounded": False})
    C0 = max(abs(H.f_min), abs(H.f_max))
    notes = list(H.notes)

    def area(R):
        if omega0 is None:
            return ball_area(spec, R, origin)
        w = quadrature_weights(grid)
        x, y = grid.points.T
        return float(np.sum(w[m & (np.hypot(x - origin[0], y - origin[1]) <= R)]))

    def bmeasure(ids, R):
        return boundary_measure(spec, list(ids), R, origin) if ids else 0.0

    if case in ("ii", "iii", "iv", "v"):
        bval = H.star_value if H.star_value is not None else (H.inf_u if b is None else b)
    else:
        bval = H.inf_u if b is None else b
    if case == "vi":
        bval = 0.0
    pairs = []
    const = float("nan")
    if case in ("i", "ii"):
        const = S + C0 * (bval - H.inf_u)
        thr = max((bval - H.inf_u) / 2, -H.inf_u, 0.0)
    elif case == "iii":
        const = S
        thr = max(-H.inf_u, 0.0)
    elif case in ("iv", "v"):
        thr = abs(bval)
    else:
        const = 2 * S
        thr = 1.0
    off_b = [cid for cid, (lo, hi) in H.star_values.items() if max(abs(lo - bval), abs(hi - bval)) > 1e-9]
    sup_dev_b = max([max(abs(lo - bval), abs(hi - bval)) for lo, hi in H.star_values.values()], default=0.0)
    for R in R_list:
        lhs = _lhs(fld, m, p, R)
        if case in ("i", "ii", "iii"):
            rhs = const * area(4 * R)
            if case == "i":
                rhs += S * sup_dev_b * bmeasure(off_b, 4 * R)
        elif case in ("iv", "v"):
            dev = float(np.max(np.abs(fld.values[m] - bval)))
            rhs = (S + 3 * C0 * min(2 * R, dev)) * area(8 * R)
        else:
            rhs = const * (area(2 * R) + R * bmeasure(H.star_components, 2 * R))
        trunc = not _window_contains(spec, R, origin)
        if trunc:
            notes.append(f"R={R:g}: the set rho <= R leaves the grid window; truncated, inconclusive")
        pairs.append(CalibrationPair(float(R), lhs, float(rhs), R > thr, trunc))
    used = [q for q in pairs if q.above_threshold and not q.truncated]
    verdict = bool(used) and all(q.holds for q in used)
    return EnergyReport(f"calibration:{case}", (), case, tuple(pairs), verdict, const, thr,
                        tuple(notes), hyp)


@dataclass(frozen=True)
class AnnulusChainReport:
    R: float
    lhs: float
    rhs: float
    C3: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def annulus_chain_check(fld: GridField, R: float, omega0=None, origin=(0.0, 0.0),
                        C3: float = 2.0) -> AnnulusChainReport:
    """``int_{sqrt R <= rho <= R} a|grad u|^2 / rho^2 <= C3 (V(R)/R^2 + int V(s)/s^3 ds)``.

    ``V(s)`` is the same node sum as the calibration left-hand side, so the
    ``s``-integral of the step function is evaluated exactly.
    """
    n = fld.grid.n_interior
    m = _omega0_mask(fld, omega0)[:n]
    p = rho(fld, origin)[:n]
    du = interior_gradient(fld.grid, fld.values)
    g2 = np.sum(du * du, axis=1)
    dens = quadrature_weights(fld.grid)[:n] * fld.profile.a(np.sqrt(g2)) * g2
    sR = math.sqrt(R)
    band = m & (p >= sR) & (p <= R)
    lhs = float(np.sum(dens[band] / p[band] ** 2))
    inside = m & (p <= R)
    V_R = float(np.sum(dens[inside]))
    lo = np.maximum(p[inside], sR)
    tail = float(np.sum(dens[inside] * 0.5 * (lo ** -2.0 - R ** -2.0)))
    return AnnulusChainReport(float(R), lhs, C3 * (V_R / R ** 2 + tail), C3)


# ----------------------------------------------------------------- dispatch

@dataclass(frozen=True)
class DispatchReport:
    applicable: dict
    chosen: Optional[str]
    cutoff_family: str
    radii: tuple
    energies: tuple
    truncated: tuple
    decreasing: bool
    verdict: bool
    failed: dict
    notes: tuple


def _growth_ok(values, R, power):
    """``values(R) / (R^power log R)`` decreasing over the last three radii."""
    ratio = np.asarray(values) / (np.asarray(R) ** power * np.log(R))
    return bool(np.all(np.diff(ratio[-3:]) < 0))


def moderate_energy_dispatch(fld: GridField, facts: Optional[dict] = None, omega0=None,
                             radii=(2.0, 4.0, 8.0), growth_radii=(4.0, 16.0, 64.0, 256.0),
                             origin=(0.0, 0.0), C_list=(1.0, 10.0, 100.0)) -> DispatchReport:
    """Select a case of the moderate-energy criterion and run the rho-cutoff energies.

    Cases are tried in the order (ii), (iii), (i), (v), (iv), (vi).  Growth
    hypotheses are evaluated on the untruncated shape at ``growth_radii``.
    """
    facts = dict(facts or {})
    spec = fld.grid.spec
    notes = []
    mc = [check_mean_curvature_type(fld.profile, C, C) for C in C_list]
    if not any(r.passed for r in mc):
        raise InapplicableError("energy: profile is not of mean-curvature type for C1 = C2 in "
                                f"{list(C_list)}", {"mean_curvature_type": False})
    H = measure_hypotheses(fld, omega0, facts)
    Rg = np.asarray(growth_radii, dtype=float)
    if omega0 is not None:
        notes.append("growth hypotheses measured on the whole untruncated shape")
    vol = volume_growth(spec, Rg)
    area = vol.area
    star_len = np.array([boundary_measure(spec, list(H.star_components), R, origin) for R in Rg]) \
        if H.star_components else np.zeros_like(Rg)
    growth = {
        "volume_o(R^2 log R)": vol.consistent,
        "volume_o(R log R)": _growth_ok(area, Rg, 1),
        "star_boundary_o(R^2 log R)": bool(star_len.max() == 0) or _growth_ok(star_len, Rg, 2),
        "star_boundary_o(R log R)": bool(star_len.max() == 0) or _growth_ok(star_len, Rg, 1),
    }
    applicable, failed = {}, {}
    for case in DISPATCH_ORDER:
        hyp = case_hypotheses(H, case, facts.get("b"), fld.grid.h)
        hyp["volume_o(R^2 log R)"] = growth["volume_o(R^2 log R)"]
        if case == "i":
            hyp["star_boundary_o(R^2 log R)"] = growth["star_boundary_o(R^2 log R)"]
        if case == "iv":
            hyp["volume_o(R log R)"] = growth["volume_o(R log R)"]
        if case == "vi":
            hyp["star_boundary_o(R log R)"] = growth["star_boundary_o(R log R)"]
        for k, v in facts.get(f"case_{case}", {}).items():
            hyp[k] = bool(v)
        ok = all(hyp.values())
        applicable[case] = ok
        if not ok:
            failed[case] = [k for k, v in hyp.items() if not v]
    chosen = next((c for c in DISPATCH_ORDER if applicable[c]), None)
    if chosen is None:
        raise InapplicableError("energy: no case of the moderate-energy criterion applies; " +
                                "; ".join(f"({c}): {', '.join(v)}" for c, v in failed.items()),
                                failed)
    energies, trunc = [], []
    for R in radii:
        energies.append(energy_integral(fld, rho_cutoff(fld, R, origin)))
        trunc.append(not _window_contains(spec, R, origin))
    good = [e for e, t in zip(energies, trunc) if not t]
    decreasing = len(good) >= 2 and all(b < a for a, b in zip(good, good[1:]))
    if any(trunc):
        notes.append("some radii exceed the grid window; their energies are not used")
    notes.extend(H.notes)
    return DispatchReport(applicable, chosen, "rho-cutoff", tuple(float(r) for r in radii),
                          tuple(energies), tuple(trunc), decreasing, decreasing, failed, tuple(notes))
