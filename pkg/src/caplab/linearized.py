"""Linearisation ``L w = div(A(grad u) grad w) + f'(u) w`` around a solved field."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigError
from .fields import GridField
from .operators import OperatorProfile
from .solver import _a_over_g, edge_operators, edge_state, edge_tensors


@dataclass(frozen=True)
class KillingField2D:
    """Translation by a unit vector ``v`` or rotation about a point ``p``."""

    kind: str
    v: tuple = (1.0, 0.0)
    p: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("Translation", "Rotation"):
            raise ValueError(f"unknown Killing field kind {self.kind!r}")
        if self.kind == "Translation":
            n = math.hypot(*self.v)
            if n == 0:
                raise ValueError("translation vector must be nonzero")
            object.__setattr__(self, "v", (self.v[0] / n, self.v[1] / n))

    @classmethod
    def translation(cls, v):
        return cls("Translation", v=tuple(map(float, v)))

    @classmethod
    def rotation(cls, p=(0.0, 0.0)):
        return cls("Rotation", p=tuple(map(float, p)))

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "Translation":
            return np.stack([np.full_like(x, self.v[0]), np.full_like(y, self.v[1])], axis=-1)
        return np.stack([-(y - self.p[1]), x - self.p[0]], axis=-1)

    def gradient(self, x=None, y=None):
        if self.kind == "Translation":
            return np.zeros((2, 2))
        return np.array([[0.0, -1.0], [1.0, 0.0]])

    def __str__(self):
        if self.kind == "Translation":
            return f"translate:{self.v[0]:g},{self.v[1]:g}"
        return f"rotate:{self.p[0]:g},{self.p[1]:g}"


def parse_killing(text: str) -> KillingField2D:
    """``"translate:1,0"`` or ``"rotate:0,0"``."""
    try:
        kind, rest = text.split(":")
        a, b = (float(s) for s in rest.split(","))
    except ValueError:
        raise ConfigError(f"bad Killing field {text!r}; use translate:vx,vy or rotate:px,py") from None
    if kind == "translate":
        return KillingField2D.translation((a, b))
    if kind == "rotate":
        return KillingField2D.rotation((a, b))
    raise ConfigError(f"unknown Killing field kind {kind!r}")


# ----------------------------------------------------------------- tensors

def A_tensor(profile: OperatorProfile, grad) -> np.ndarray:
    """``A(X) = (a'(|X|)/|X|) X (x) X + a(|X|) Id`` for one or many vectors."""
    X = np.atleast_2d(np.asarray(grad, dtype=float))
    g = np.hypot(X[:, 0], X[:, 1])
    profile.check_domain(g)
    c = _a_over_g(profile, g)
    A = c[:, None, None] * X[:, :, None] * X[:, None, :] + profile.a(g)[:, None, None] * np.eye(2)
    return A[0] if np.ndim(grad) == 1 else A


@dataclass(frozen=True)
class EdgeTensors:
    grad: np.ndarray
    A: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    midpoints: np.ndarray


def assemble_A(fld: GridField) -> EdgeTensors:
    """Edge gradients and ``A(grad u)`` on every grid edge of the field."""
    ops = edge_operators(fld.grid)
    G, A = edge_tensors(fld.profile, ops, fld.values)
    g = np.hypot(G[:, 0], G[:, 1])
    lam1 = fld.profile.lambda1(g)
    lam2 = fld.profile.lambda2(g)
    P = fld.grid.points
    mid = 0.5 * (P[ops.tail] + P[ops.head])
    return EdgeTensors(G, A, lam1, lam2, mid)


def linearized_matrix(fld: GridField) -> sp.csr_matrix:
    """Jacobian of the discrete residual, rows on interior nodes, all columns."""
    ops = edge_operators(fld.grid)
    d, tau, g = edge_state(fld.profile, ops, fld.values)
    a = fld.profile.a(g)
    c = _a_over_g(fld.profile, g)
    dF = sp.diags(a + c * d * d) @ ops.Dn + sp.diags(c * d * tau) @ ops.Tt
    n = fld.grid.n_interior
    fp = np.asarray(fld.source.f_prime(fld.values[:n]), dtype=float) * np.ones(n)
    D = sp.csr_matrix((fp, (np.arange(n), np.arange(n))), shape=(n, fld.grid.n_points))
    return (ops.Div @ dF + D).tocsr()


# ---------------------------------------------------------------- stability

@dataclass(frozen=True)
class StabilityReport:
    lambda_min: float
    mask: str
    eigenvector: np.ndarray
    shift: float
    iterations: int
    converged: bool
    nodes: np.ndarray

    def rayleigh(self, K, M) -> float:
        """Rayleigh quotient of the stored eigenvector for a form on ``nodes``."""
        x = self.eigenvector[self.nodes]
        return float(x @ (K @ x) / (x @ (M @ x)))


MaskLike = Union[np.ndarray, Callable, tuple, None]


def resolve_mask(grid, mask: MaskLike) -> tuple:
    """Boolean interior-node mask and a short description."""
    n = grid.n_interior
    x, y = grid.points[:n].T
    if mask is None:
        return np.ones(n, dtype=bool), "all interior nodes"
    if isinstance(mask, tuple):
        x0, x1, y0, y1 = mask
        return (x > x0) & (x < x1) & (y > y0) & (y < y1), f"box:{x0:g},{x1:g},{y0:g},{y1:g}"
    if callable(mask):
        return np.asarray(mask(x, y), dtype=bool), getattr(mask, "__name__", "callable")
    m = np.asarray(mask, dtype=bool)
    return (m[:n] if m.size != n else m), "array"


def parse_mask(text: str) -> tuple:
    """``"box:x0,x1,y0,y1"``."""
    try:
        kind, rest = text.split(":")
        vals = tuple(float(s) for s in rest.split(","))
    except ValueError:
        raise ConfigError(f"bad mask {text!r}; use box:x0,x1,y0,y1") from None
    if kind != "box" or len(vals) != 4:
        raise ConfigError(f"bad mask {text!r}; use box:x0,x1,y0,y1")
    return vals


def stability_form(fld: GridField, nodes: np.ndarray, potential=None):
    """Stiffness ``K`` and lumped mass ``M`` restricted to ``nodes``.

    ``K`` discretises ``int <A grad phi, grad phi> - f'(u) phi^2`` for grid
    functions vanishing off ``nodes``: each edge contributes its gradient
    (normal difference plus transverse reconstruction) weighted by half of
    ``length * h``.  ``potential`` replaces ``f'(u)`` when given.
    """
    grid = fld.grid
    h = grid.h
    ops = edge_operators(grid)
    G, A = edge_tensors(fld.profile, ops, fld.values)
    N = grid.n_points
    sel = sp.csr_matrix((np.ones(nodes.size), (nodes, np.arange(nodes.size))),
                        shape=(N, nodes.size))
    Dn = ops.Dn @ sel
    Tt = ops.Tt @ sel
    # gradient rows in (x, y) coordinates per edge
    ax0 = sp.diags((ops.axis == 0).astype(float))
    ax1 = sp.diags((ops.axis == 1).astype(float))
    Gx = ax0 @ Dn + ax1 @ Tt
    Gy = ax1 @ Dn + ax0 @ Tt
    w = 0.5 * ops.length * h
    K = (Gx.T @ sp.diags(w * A[:, 0, 0]) @ Gx + Gx.T @ sp.diags(w * A[:, 0, 1]) @ Gy
         + Gy.T @ sp.diags(w * A[:, 1, 0]) @ Gx + Gy.T @ sp.diags(w * A[:, 1, 1]) @ Gy)
    if potential is None:
        potential = np.asarray(fld.source.f_prime(fld.values[nodes]), dtype=float) * np.ones(nodes.size)
    else:
        potential = np.broadcast_to(np.asarray(potential, dtype=float), (N,))[nodes] \
            if np.size(potential) in (1, N) else np.asarray(potential, dtype=float)
    mass = np.full(nodes.size, h * h)
    K = (K - sp.diags(potential * mass)).tocsc()
    K = 0.5 * (K + K.T)
    return K.tocsc(), sp.diags(mass).tocsc()


def stability_lambda1(fld: GridField, mask: MaskLike = None, potential=None, tol: float = 1e-10,
                      max_iter: int = 500) -> StabilityReport:
    """Smallest eigenvalue of ``K phi = lambda M phi`` on the masked interior nodes.

    Inverse power iteration with shift ``min(0, sigma_G)``, where ``sigma_G``
    is a Gershgorin lower bound for ``M^{-1} K``; a singular factorisation
    is retried with a small negative shift.
    """
    m, desc = resolve_mask(fld.grid, mask)
    nodes = np.nonzero(m)[0]
    if nodes.size == 0:
        raise ValueError("stability mask selects no interior node")
    K, M = stability_form(fld, nodes, potential)
    mdiag = M.diagonal()
    absK = abs(K)
    radius = np.asarray(absK.sum(axis=1)).ravel() - np.abs(K.diagonal())
    gersh = float(np.min((K.diagonal() - radius) / mdiag))
    shift = min(0.0, gersh)
    scale = float(np.max(np.abs(K.diagonal() / mdiag)))
    lu = None
    for _ in range(5):
        try:
            lu = splu((K - shift * M).tocsc())
            break
        except RuntimeError:
            shift -= 1e-8 * scale if shift == 0 else abs(shift)
    if lu is None:
        raise RuntimeError("stability: could not factorise the shifted form")
    x = np.ones(nodes.size)
    x /= math.sqrt(x @ (M @ x))
    lam = float(x @ (K @ x))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        y = lu.solve(M @ x)
        x = y / math.sqrt(y @ (M @ y))
        new = float(x @ (K @ x))
        r = K @ x - new * (M @ x)
        res = math.sqrt(float(r @ (r / mdiag)))
        done = abs(new - lam) <= tol * max(1.0, abs(new)) and res <= math.sqrt(tol) * max(1.0, abs(new))
        lam = new
        if done:
            converged = True
            break
    vec = np.zeros(fld.grid.n_points)
    vec[nodes] = x if x.sum() >= 0 else -x
    return StabilityReport(lam, desc, vec, shift, it, converged, nodes)


# ------------------------------------------------------ Killing derivative

def deep_interior(grid, layers: int = 2) -> np.ndarray:
    """Interior nodes whose ``layers``-step lattice neighbourhood is interior."""
    n = grid.n_interior
    ok = np.all(grid.arm_idx[:n] < n, axis=1) & np.all(grid.arm_idx[:n] >= 0, axis=1)
    ok &= np.all(np.isclose(grid.arm_len[:n], grid.h), axis=1)
    for _ in range(layers - 1):
        nb = grid.arm_idx[:n]
        ok = ok & np.all(np.where(nb < n, ok[np.clip(nb, 0, n - 1)], False), axis=1)
    return ok


def killing_derivative(fld: GridField, X: KillingField2D) -> GridField:
    """``w = <grad u, X>`` and the sup of ``L w`` two cells inside the boundary."""
    grid = fld.grid
    XY = X(grid.points[:, 0], grid.points[:, 1])
    grad = fld.point_gradient
    w = np.einsum("ij,ij->i", grad, XY)
    deep = deep_interior(grid, 2)
    Lw = linearized_matrix(fld) @ w
    resid = float(np.max(np.abs(Lw[deep]))) if deep.any() else float("nan")
    scale = float(np.nanmax(np.hypot(grad[:, 0], grad[:, 1])))
    meta = {"killing": str(X), "linearized_residual": resid, "residual_nodes": int(deep.sum()),
            "scale": scale}
    return GridField(grid, w, fld.profile, fld.source, meta)


def default_sign_tol(w: GridField) -> float:
    return 10.0 * w.grid.h ** 2 * w.metadata.get("scale", 1.0)


def sign_trichotomy_check(w: GridField, mask: MaskLike = None, tol: Optional[float] = None) -> str:
    """``IdenticallyZero``, ``Positive``, ``Negative`` or ``Mixed`` on interior nodes."""
    m, _ = resolve_mask(w.grid, mask)
    vals = w.values[: w.grid.n_interior][m]
    tol = default_sign_tol(w) if tol is None else tol
    hi, lo = float(np.max(vals)), float(np.min(vals))
    if max(hi, -lo) <= tol:
        return "IdenticallyZero"
    if lo >= -tol:
        return "Positive"
    if hi <= tol:
        return "Negative"
    return "Mixed"
