"""One-dimensional profiles ``(a(|y'|) y')' + f(y) = 0``.

In explicit form the equation reads ``y'' = -f(y) / lambda1(|y'|)``.  Along
a solution the first integral ``E = G(|y'|) + F(y)`` is constant, where
``G(s) = int_0^s sigma lambda1(sigma) dsigma``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .operators import OperatorProfile
from .sources import SourceTerm

LAMBDA1_STOP = 1e-10
SIGN_THRESHOLD = 1e-12


@dataclass(frozen=True)
class Classification:
    kind: str
    radius: Optional[float] = None
    center: Optional[tuple] = None
    t_stop: Optional[float] = None
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ProfileSolution:
    t: np.ndarray
    u: np.ndarray
    uprime: np.ndarray
    E: np.ndarray
    classification: Classification
    termination: str

    @property
    def drift(self) -> float:
        return float(np.max(np.abs(self.E - self.E[0])))


def first_integral(profile: OperatorProfile, source: SourceTerm, u, uprime):
    """``E = G(|u'|) + F(u)``; even in ``u'``."""
    return profile.energy_density(np.abs(uprime)) + source.F(u)


def shoot(profile: OperatorProfile, source: SourceTerm, u0: float, c: float,
          t_span=(0.0, 1.0), step: float = 1e-4, classify_tol: float = 1e-6) -> ProfileSolution:
    """Integrate the profile ODE with classical RK4 from ``t_span[0]``.

    ``t_span[1] < t_span[0]`` integrates backwards.  Integration stops early
    when ``lambda1(|y'|) < 1e-10`` or ``|y'|`` reaches the validity limit.

    Returns
    -------
    ProfileSolution
        Nodes, values, slopes, first-integral trace and classification.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if not (np.isfinite(u0) and np.isfinite(c)):
        raise ValueError("initial data must be finite")
    if abs(c) >= profile.t_max:
        raise DomainError(f"initial slope {c} outside [0, {profile.t_max})")
    if profile.regularity_class == "A":
        raise DomainError(f"{profile.name}: class-A profiles are not supported by the ODE form")
    t0, t1 = float(t_span[0]), float(t_span[1])
    n = int(np.ceil(abs(t1 - t0) / step - 1e-9))
    dt = (t1 - t0) / n if n else 0.0

    ts, ys, ps = [t0], [float(u0)], [float(c)]
    termination = "SpanExhausted"
    y, p = float(u0), float(c)

    def lam1(q):
        q = abs(q)
        if q >= profile.t_max:
            return -1.0
        return float(profile.a(q) + q * profile.a_prime(q))

    def deriv(yy, pp):
        lm = lam1(pp)
        if not lm >= LAMBDA1_STOP:
            raise _Stop
        return pp, -float(source.f(yy)) / lm

    for k in range(n):
        try:
            k1 = deriv(y, p)
            k2 = deriv(y + 0.5 * dt * k1[0], p + 0.5 * dt * k1[1])
            k3 = deriv(y + 0.5 * dt * k2[0], p + 0.5 * dt * k2[1])
            k4 = deriv(y + dt * k3[0], p + dt * k3[1])
        except _Stop:
            termination = "Lambda1Vanished"
            break
        y_new = y + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p_new = p + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if abs(p_new) >= profile.t_max:
            termination = "VerticalTangent"
            break
        if lam1(p_new) < LAMBDA1_STOP:
            termination = "Lambda1Vanished"
            break
        y, p = y_new, p_new
        ts.append(t0 + (k + 1) * dt)
        ys.append(y)
        ps.append(p)

    t = np.array(ts)
    u = np.array(ys)
    up = np.array(ps)
    E = np.asarray(first_integral(profile, source, u, up), dtype=float)
    sol = ProfileSolution(t, u, up, E, Classification("Unclassified"), termination)
    if t.size >= 4:
        cls = classify(sol, profile, source, classify_tol)
    else:
        cls = Classification("Unclassified", detail={"reason": termination})
    return ProfileSolution(t, u, up, E, cls, termination)


class _Stop(Exception):
    pass


def fit_circle(x, y):
    """Kasa algebraic circle fit followed by one Gauss-Newton step.

    Returns ``(xc, yc, R)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    M = np.column_stack([x, y, np.ones_like(x)])
    rhs = x ** 2 + y ** 2
    (A, B, C), *_ = np.linalg.lstsq(M, rhs, rcond=None)
    xc, yc = A / 2, B / 2
    R = np.sqrt(C + xc ** 2 + yc ** 2)
    # geometric refinement of (xc, yc, R)
    d = np.hypot(x - xc, y - yc)
    J = np.column_stack([-(x - xc) / d, -(y - yc) / d, -np.ones_like(x)])
    delta, *_ = np.linalg.lstsq(J, -(d - R), rcond=None)
    return xc + delta[0], yc + delta[1], R + delta[2]


def classify(sol: ProfileSolution, profile: OperatorProfile, source: SourceTerm,
             tol: float = 1e-6, drift_tol: float = 1e-8) -> Classification:
    """Tag a profile as affine, circular arc, capillary, blow-up or turning point."""
    t, u = sol.t, sol.u
    if t.size < 4:
        raise ValueError("classification needs at least 4 nodes")
    coef = np.polyfit(t, u, 1)
    dev_line = float(np.max(np.abs(np.polyval(coef, t) - u)))
    if dev_line <= tol:
        return Classification("AffineHalfPlane", detail={"slope": float(coef[0]),
                                                         "deviation": dev_line})
    if source.kind == "ConstantH" and source.params["H"] != 0:
        r_expected = 1.0 / abs(source.params["H"])
        xc, yc, R = fit_circle(t, u)
        dev = float(np.max(np.abs(np.hypot(t - xc, u - yc) - r_expected)))
        if dev <= tol and abs(R - r_expected) <= tol:
            return Classification("CylinderArc", radius=float(R), center=(float(xc), float(yc)),
                                  detail={"deviation": dev})
    span = abs(t[-1] - t[0])
    drift = float(np.max(np.abs(sol.E - sol.E[0])))
    if source.kind == "Capillary" and drift <= drift_tol * (1 + abs(sol.E[0])) * max(span, 1.0):
        return Classification("CapillaryProfile", detail={"drift": drift})
    if sol.termination in ("Lambda1Vanished", "VerticalTangent"):
        return Classification("GradientBlowup", t_stop=float(t[-1]))
    lo, hi = monotone_span(sol)
    if hi != t[-1]:
        return Classification("TurningPoint", t_stop=float(hi))
    return Classification("Unclassified", detail={"reason": sol.termination})


def monotone_span(sol: ProfileSolution) -> tuple:
    """Maximal initial interval on which ``u'`` keeps a strict sign."""
    up = sol.uprime
    s0 = np.sign(up[0]) if abs(up[0]) > SIGN_THRESHOLD else 0.0
    if s0 == 0.0:
        return float(sol.t[0]), float(sol.t[0])
    ok = s0 * up > SIGN_THRESHOLD
    bad = np.nonzero(~ok)[0]
    end = bad[0] - 1 if bad.size else up.size - 1
    return float(sol.t[0]), float(sol.t[end])
