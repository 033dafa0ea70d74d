"""Reference problems shared by the command line and the test-suite."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .domain import DomainSpec2D, build_grid
from .operators import OperatorProfile, mean_curvature
from .profile import shoot
from .solver import solve_dirichlet
from .sources import SourceTerm, capillary, constant


@dataclass(frozen=True)
class Instance:
    profile: OperatorProfile
    source: SourceTerm
    spec: DomainSpec2D
    notes: dict


@lru_cache(maxsize=16)
def strip_profile_start(kappa=1.0, T=1.0, slope=0.4, step=1e-4):
    """Height ``m`` with ``u(0) = m, u'(0) = 0`` and ``u'(T) = slope``."""
    prof, src = mean_curvature(), capillary(kappa)
    end = lambda m: shoot(prof, src, m, 0.0, (0.0, T), step).uprime[-1] - slope
    m = brentq(end, 1e-3, 2.0, xtol=1e-14)
    sol = shoot(prof, src, m, 0.0, (0.0, T), step)
    return m, float(sol.u[-1])


def strip_capillary(y_extent=(-0.5, 0.5), kappa=1.0, slope=0.4) -> Instance:
    """Mean-curvature capillary strip ``0 < x < 1`` with a monotone 1D solution.

    The data come from the profile that is flat at ``x = 0`` and reaches
    slope ``0.4`` at ``x = 1``.
    """
    m, top = strip_profile_start(kappa, 1.0, slope)
    spec = DomainSpec2D.strip(1.0, y_extent, b=(m, top), c=(0.0, slope))
    return Instance(mean_curvature(), capillary(kappa), spec,
                    {"u0": m, "uprime0": 0.0, "slope": slope, "kappa": kappa})


def monotone_strip(u0=0.3, c=0.3, T=1.0, y_extent=(-0.5, 0.5), kappa=1.0) -> Instance:
    """Strip with data from the profile ``u(0) = u0, u'(0) = c``; ``grad u`` never vanishes."""
    prof, src = mean_curvature(), capillary(kappa)
    sol = shoot(prof, src, u0, c, (0.0, T), 1e-4)
    if sol.termination != "SpanExhausted":
        raise ValueError("profile breaks down before x = T")
    spec = DomainSpec2D.strip(T, y_extent, b=(u0, float(sol.u[-1])), c=(c, float(sol.uprime[-1])))
    return Instance(prof, src, spec, {"u0": u0, "uprime0": c, "kappa": kappa})


def symmetric_slab(half_width=0.5, m=1.5, y_extent=(-0.5, 0.5), kappa=1.0) -> Instance:
    """Strip ``|x - w| < w`` with equal data from a profile with minimum ``m`` on the centre line."""
    w = half_width
    prof, src = mean_curvature(), capillary(kappa)
    sol = shoot(prof, src, m, 0.0, (0.0, w), 1e-4)
    if sol.termination != "SpanExhausted":
        raise ValueError("profile breaks down before the slab wall")
    b = float(sol.u[-1])
    spec = DomainSpec2D.strip(2 * w, y_extent, b=(b, b),
                              c=(float(sol.uprime[-1]), float(sol.uprime[-1])))
    return Instance(prof, src, spec, {"u_min": m, "center": w, "wall_slope": float(sol.uprime[-1]),
                                      "kappa": kappa})


def serrin_cap(R=1.0, R_s=2.0) -> Instance:
    """Disk of radius ``R`` with ``f = 2/R_s``; the solution is a spherical cap."""
    b = math.sqrt(R_s ** 2 - R ** 2)
    spec = DomainSpec2D.disk(R, (0.0, 0.0), b)
    return Instance(mean_curvature(), constant(2.0 / R_s), spec, {"R_s": R_s})


def cap_exact(x, y, R_s=2.0):
    return np.sqrt(R_s ** 2 - x * x - y * y)


def solve_instance(inst: Instance, h: float, **opts):
    return solve_dirichlet(inst.profile, inst.source, build_grid(inst.spec, h), **opts)
