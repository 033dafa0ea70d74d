"""Operator family ``div(a(|grad u|) grad u)``.

A profile is described by the scalar function ``a(t)`` on ``[0, t_max)``.
The linearisation tensor at a gradient ``X`` is

    A(X) = a'(|X|)/|X| X (x) X + a(|X|) Id,

with eigenvalue ``lambda1 = a + t a' = (t a)'`` along ``X`` and
``lambda2 = a`` across it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError

CLASSES = ("A", "AStrong", "ASuperStrong")
NUMERIC_STEP = 1e-6


@dataclass(frozen=True)
class OperatorProfile:
    """Scalar profile ``a`` with derivative and validity interval.

    Parameters
    ----------
    name : str
        Registry name, e.g. ``"p-laplacian:3"``.
    a, a_prime : callable
        Vectorised maps on ``[0, t_max)``.
    t_max : float
        Upper end of the validity interval (``inf`` for most profiles).
    regularity_class : str
        One of ``"A"``, ``"AStrong"``, ``"ASuperStrong"``.
    builtin_tag : str
        ``MeanCurvature``, ``PLaplacian``, ``PQLaplacian``, ``Exponential``,
        ``Polytropic`` or ``Custom``.
    params : dict
        Tag parameters (``p``, ``q``, ``gamma``).
    G : callable, optional
        Closed form of ``G(s) = int_0^s sigma lambda1(sigma) dsigma``.
    """

    name: str
    a: Callable
    a_prime: Callable
    t_max: float = math.inf
    regularity_class: str = "ASuperStrong"
    builtin_tag: str = "Custom"
    params: dict = field(default_factory=dict)
    G: Optional[Callable] = None

    def check_domain(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t >= self.t_max) or np.any(np.isnan(t)):
            bad = t[(t < 0) | (t >= self.t_max) | np.isnan(t)].ravel()[0]
            raise DomainError(
                f"{self.name}: t={bad!r} outside validity interval [0, {self.t_max!r})"
            )
        return t

    def lambda1(self, t):
        t = self.check_domain(t)
        return self.a(t) + t * self.a_prime(t)

    def lambda2(self, t):
        return self.a(self.check_domain(t))

    def energy_density(self, s):
        """``G(|s|)``, the gradient part of the first integral."""
        s = np.abs(np.asarray(s, dtype=float))
        self.check_domain(s)
        if self.G is not None:
            return self.G(s)
        return _quad_G(self, s)


def _mc_G(s):
    # 1 - 1/sqrt(1+s^2) without cancellation at small s
    s2 = np.asarray(s, dtype=float) ** 2
    r = np.sqrt(1.0 + s2)
    return s2 / (r * (1.0 + r))


def _exp_G(s):
    s2 = np.asarray(s, dtype=float) ** 2
    return 0.5 * ((2.0 * s2 - 1.0) * np.expm1(s2) + 2.0 * s2)


def _quad_G(profile, s):
    lam = lambda x: float(profile.a(x) + x * profile.a_prime(x))
    flat = np.atleast_1d(s).ravel()
    out = np.empty_like(flat)
    for k, sk in enumerate(flat):
        out[k] = integrate.quad(lambda x: x * lam(x), 0.0, sk,
                                epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return out.reshape(np.shape(s)) if np.ndim(s) else out[0]


def eval_lambda(profile: OperatorProfile, t):
    """Return ``(lambda1, lambda2)`` at ``t``; raises DomainError outside range."""
    t = profile.check_domain(t)
    a = profile.a(t)
    return a + t * profile.a_prime(t), a


# ---------------------------------------------------------------- builtins

def mean_curvature() -> OperatorProfile:
    return OperatorProfile(
        name="mean-curvature",
        a=lambda t: 1.0 / np.sqrt(1.0 + np.asarray(t) ** 2),
        a_prime=lambda t: -np.asarray(t) * (1.0 + np.asarray(t) ** 2) ** -1.5,
        regularity_class="ASuperStrong",
        builtin_tag="MeanCurvature",
        G=_mc_G,
    )


def p_laplacian(p: float) -> OperatorProfile:
    if p <= 1:
        raise ConfigError("p-laplacian requires p > 1")
    cls = "ASuperStrong" if p == 2 else "A"
    return OperatorProfile(
        name=f"p-laplacian:{p:g}",
        a=lambda t: np.asarray(t, dtype=float) ** (p - 2),
        a_prime=lambda t: (p - 2) * np.asarray(t, dtype=float) ** (p - 3) if p != 2
        else np.zeros_like(np.asarray(t, dtype=float)),
        regularity_class=cls,
        builtin_tag="PLaplacian",
        params={"p": p},
        G=lambda s: (p - 1) / p * np.asarray(s) ** p,
    )


def pq_laplacian(p: float, q: float) -> OperatorProfile:
    if p <= 1 or q <= 1:
        raise ConfigError("pq-laplacian requires p, q > 1")

    def power(t, e):
        return np.asarray(t, dtype=float) ** e

    def dpower(t, e):
        if e == 0:
            return np.zeros_like(np.asarray(t, dtype=float))
        return e * power(t, e - 1)

    lo, hi = sorted((p, q))
    if lo != 2:
        cls = "A"
    elif hi == 2 or hi == 3 or hi >= 4:
        cls = "ASuperStrong"
    elif hi >= 3:
        cls = "AStrong"
    else:
        cls = "A"
    return OperatorProfile(
        name=f"pq-laplacian:{p:g}:{q:g}",
        a=lambda t: power(t, p - 2) + power(t, q - 2),
        a_prime=lambda t: dpower(t, p - 2) + dpower(t, q - 2),
        regularity_class=cls,
        builtin_tag="PQLaplacian",
        params={"p": p, "q": q},
        G=lambda s: (p - 1) / p * power(s, p) + (q - 1) / q * power(s, q),
    )


def exponential() -> OperatorProfile:
    return OperatorProfile(
        name="exponential",
        a=lambda t: np.exp(np.asarray(t) ** 2),
        a_prime=lambda t: 2.0 * np.asarray(t) * np.exp(np.asarray(t) ** 2),
        regularity_class="ASuperStrong",
        builtin_tag="Exponential",
        G=_exp_G,
    )


def polytropic(gamma: float) -> OperatorProfile:
    """Gas-dynamics profile; valid in the subsonic range ``t < sqrt(2/(gamma+1))``."""
    if gamma <= 1:
        raise ConfigError("polytropic requires gamma > 1")
    k = 0.5 * (gamma - 1.0)
    m = 1.0 / (gamma - 1.0)

    def a(t):
        return (1.0 - k * np.asarray(t) ** 2) ** m

    def a_prime(t):
        t = np.asarray(t)
        return -t * (1.0 - k * t ** 2) ** (m - 1.0)

    def G(s):
        s = np.asarray(s)
        return s ** 2 * a(s) + ((1.0 - k * s ** 2) ** (m + 1.0) - 1.0) / gamma

    return OperatorProfile(
        name=f"polytropic:{gamma:g}",
        a=a,
        a_prime=a_prime,
        t_max=math.sqrt(2.0 / (gamma + 1.0)),
        regularity_class="ASuperStrong",
        builtin_tag="Polytropic",
        params={"gamma": gamma},
        G=G,
    )


def numeric_derivative(a: Callable, step: float = NUMERIC_STEP) -> Callable:
    """Central difference of ``a``; forward difference for ``t < step``."""

    def a_prime(t):
        t = np.asarray(t, dtype=float)
        lo = np.maximum(t - step, 0.0)
        return (a(t + step) - a(lo)) / (t + step - lo)

    return a_prime


def custom(a: Callable, a_prime: Optional[Callable] = None, t_max: float = math.inf,
           name: str = "custom") -> OperatorProfile:
    """User profile; class is determined by sampling."""
    prof = OperatorProfile(name=name, a=a, a_prime=a_prime or numeric_derivative(a),
                           t_max=t_max, regularity_class="A", builtin_tag="Custom")
    rep = check_regularity_class(prof)
    if rep.klass is None:
        raise ConfigError(f"{name}: not even class A ({rep.first_violation})")
    return OperatorProfile(name=name, a=prof.a, a_prime=prof.a_prime, t_max=t_max,
                           regularity_class=rep.klass, builtin_tag="Custom")


REGISTRY_HELP = {
    "mean-curvature": "a(t) = (1+t^2)^(-1/2), lambda1 = (1+t^2)^(-3/2)",
    "p-laplacian:<p>": "a(t) = t^(p-2), p > 1",
    "pq-laplacian:<p>:<q>": "a(t) = t^(p-2) + t^(q-2)",
    "exponential": "a(t) = exp(t^2)",
    "polytropic:<gamma>": "a(t) = (1 - (gamma-1) t^2 / 2)^(1/(gamma-1)); subsonic range "
                          "0 < t < upsilon* = sqrt(2/(gamma+1))",
}


def parse_profile(spec: str) -> OperatorProfile:
    """Build a profile from its config name."""
    parts = spec.strip().split(":")
    head = parts[0]
    try:
        args = [float(x) for x in parts[1:]]
    except ValueError:
        raise ConfigError(f"bad profile parameters in {spec!r}") from None
    table = {
        "mean-curvature": (mean_curvature, 0),
        "p-laplacian": (p_laplacian, 1),
        "pq-laplacian": (pq_laplacian, 2),
        "exponential": (exponential, 0),
        "polytropic": (polytropic, 1),
    }
    if head not in table:
        raise ConfigError(f"unknown profile {spec!r}; known: {sorted(REGISTRY_HELP)}")
    fn, nargs = table[head]
    if len(args) != nargs:
        raise ConfigError(f"profile {head!r} takes {nargs} parameter(s), got {len(args)}")
    return fn(*args)


# ---------------------------------------------------------- classification

@dataclass(frozen=True)
class RegularityReport:
    klass: Optional[str]
    holds: dict
    first_violation: Optional[tuple]
    n_samples: int


def default_samples(profile: OperatorProfile, n: int = 512) -> np.ndarray:
    hi = 10.0 if math.isinf(profile.t_max) else 0.99 * profile.t_max
    return np.concatenate([[0.0], np.geomspace(1e-6, hi, n - 1)])


def _bounded_near_zero(g: Callable) -> bool:
    # compare sup over t in [2^-14, 2^-8] against sup over [2^-30, 2^-24]
    early = max(abs(g(2.0 ** -k)) for k in range(8, 15))
    late = max(abs(g(2.0 ** -k)) for k in range(24, 31))
    return bool(np.isfinite(late) and late <= 4.0 * early + 1e-6)


def check_regularity_class(profile: OperatorProfile, samples=None) -> RegularityReport:
    """Strongest class whose sampled conditions hold.

    ``A`` needs ``a > 0`` and ``lambda1 > 0`` at positive samples.  ``AStrong``
    adds positivity at ``t = 0`` and a bounded ``a'`` near 0; ``ASuperStrong``
    adds a Lipschitz ``a'`` near 0.  Both regularity tests run on the
    geometric sequence ``t = 2^-k`` and are heuristic.
    """
    t = default_samples(profile) if samples is None else np.asarray(samples, dtype=float)
    if t.size == 0:
        raise ValueError("empty sample grid")
    t = np.sort(profile.check_domain(t))
    with np.errstate(all="ignore"):
        lam1, lam2 = eval_lambda(profile, t)
    holds = dict.fromkeys(CLASSES, True)
    violation = None

    pos = t > 0
    bad = pos & ~((lam2 > 0) & (lam1 > 0) & np.isfinite(lam1) & np.isfinite(lam2))
    if bad.any():
        t_bad = float(t[bad][0])
        return RegularityReport(None, dict.fromkeys(CLASSES, False),
                                ("A", t_bad, "a > 0 and (t a)' > 0"), t.size)

    with np.errstate(all="ignore"):
        a0 = float(profile.a(0.0))
        ap = lambda s: float(profile.a_prime(s))
        strong = np.isfinite(a0) and a0 > 0 and _bounded_near_zero(ap)
    if not strong:
        holds["AStrong"] = holds["ASuperStrong"] = False
        violation = ("AStrong", 0.0, "a(0) > 0 with a' bounded near 0")
    else:
        quotient = lambda s: (ap(s) - ap(s / 2)) / (s / 2)
        with np.errstate(all="ignore"):
            if not _bounded_near_zero(quotient):
                holds["ASuperStrong"] = False
                violation = ("ASuperStrong", 0.0, "a' Lipschitz near 0")
    klass = [c for c in CLASSES if holds[c]][-1]
    return RegularityReport(klass, holds, violation, t.size)


@dataclass(frozen=True)
class MeanCurvatureTypeReport:
    passed: bool
    ratio_curvature: float
    ratio_decay: float
    t_worst_curvature: float
    t_worst_decay: float


def check_mean_curvature_type(profile: OperatorProfile, C1: float, C2: float,
                              samples=None) -> MeanCurvatureTypeReport:
    """Test ``t^2 lambda1 <= C1 lambda2`` and ``lambda2 <= C2 / t`` on samples.

    The reported ratios are ``max t^2 lambda1 / (C1 lambda2)`` and
    ``max t lambda2 / C2``; the profile passes when both are at most 1.
    """
    if samples is None:
        hi = 100.0 if math.isinf(profile.t_max) else 0.999 * profile.t_max
        samples = np.geomspace(1e-6, hi, 2000)
    t = np.asarray(samples, dtype=float)
    if np.any(t <= 0):
        raise DomainError("mean-curvature-type samples must be positive")
    lam1, lam2 = eval_lambda(profile, t)
    with np.errstate(divide="ignore"):
        r1 = t ** 2 * lam1 / (C1 * lam2)
    r2 = t * lam2 / C2
    i1, i2 = int(np.argmax(r1)), int(np.argmax(r2))
    return MeanCurvatureTypeReport(
        passed=bool(r1[i1] <= 1.0 and r2[i2] <= 1.0),
        ratio_curvature=float(r1[i1]),
        ratio_decay=float(r2[i2]),
        t_worst_curvature=float(t[i1]),
        t_worst_decay=float(t[i2]),
    )


def sup_t_a(profile: OperatorProfile) -> float:
    """Sampled ``sup t a(t)``; ``inf`` when the samples keep growing."""
    if math.isinf(profile.t_max):
        t = np.geomspace(1e-6, 1e8, 4000)
    else:
        t = np.linspace(0.0, profile.t_max, 4001)[:-1]
    with np.errstate(all="ignore"):
        v = t * profile.a(t)
    if not np.all(np.isfinite(v)):
        return math.inf
    if math.isinf(profile.t_max) and v[-1] > 1.01 * np.max(v[t <= 1e4]):
        return math.inf
    return float(np.max(v))


def sup_a(profile: OperatorProfile) -> float:
    t = default_samples(profile, 2000)
    with np.errstate(all="ignore"):
        v = profile.a(t)
    return float(np.max(v)) if np.all(np.isfinite(v)) else math.inf
