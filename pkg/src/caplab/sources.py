"""Source terms ``f(u)`` with derivative and primitive ``F(t) = int_0^t f``."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SourceTerm:
    """Nonlinearity ``f`` with ``f'`` and primitive ``F`` (``F(0) = 0``).

    ``kind`` is ``"ConstantH"``, ``"Capillary"`` or ``"Custom"``.  The
    ``analytic`` flag is asserted by the user and never checked.
    """

    f: Callable
    f_prime: Callable
    F: Callable
    kind: str
    params: dict = field(default_factory=dict)
    name: str = ""
    analytic: bool = False


def constant(H: float) -> SourceTerm:
    return SourceTerm(
        f=lambda u: np.full(np.shape(u), float(H)) if np.ndim(u) else float(H),
        f_prime=lambda u: np.zeros(np.shape(u)) if np.ndim(u) else 0.0,
        F=lambda u: H * np.asarray(u, dtype=float) if np.ndim(u) else H * float(u),
        kind="ConstantH",
        params={"H": float(H)},
        name=f"const:{H:g}",
        analytic=True,
    )


def capillary(kappa: float) -> SourceTerm:
    return SourceTerm(
        f=lambda u: -kappa * np.asarray(u, dtype=float) if np.ndim(u) else -kappa * float(u),
        f_prime=lambda u: np.full(np.shape(u), -float(kappa)) if np.ndim(u) else -float(kappa),
        F=lambda u: -0.5 * kappa * np.asarray(u, dtype=float) ** 2 if np.ndim(u)
        else -0.5 * kappa * float(u) ** 2,
        kind="Capillary",
        params={"kappa": float(kappa)},
        name=f"capillary:{kappa:g}",
        analytic=True,
    )


# ------------------------------------------------------- expression parser

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\S))")
_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos}


def _tokenize(text):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", float(num)))
        elif name is not None:
            out.append(("name", name))
        else:
            if op not in "+-*/^()":
                raise ConfigError(f"unexpected character {op!r} in expression {text!r}")
            out.append(("op", op))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text, var):
        self.tokens = _tokenize(text)
        self.i = 0
        self.var = var
        self.text = text

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, op=None):
        tok = self.peek()
        if tok[0] is None or (op is not None and tok != ("op", op)):
            raise ConfigError(f"parse error in {self.text!r} near token {self.i}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.i != len(self.tokens):
            raise ConfigError(f"trailing input in {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return ("neg", self.unary())
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return ("num", val)
        if kind == "name":
            if val == self.var:
                return ("var",)
            if val in _FUNCS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return (val, arg)
            raise ConfigError(f"unknown name {val!r} in {self.text!r}")
        if val == "(":
            node = self.expr()
            self.take(")")
            return node
        raise ConfigError(f"parse error in {self.text!r}")


def _has_var(n):
    return n[0] == "var" or any(isinstance(c, tuple) and _has_var(c) for c in n[1:])


def _diff(n):
    tag = n[0]
    if tag == "num":
        return ("num", 0.0)
    if tag == "var":
        return ("num", 1.0)
    if tag == "neg":
        return ("neg", _diff(n[1]))
    if tag == "exp":
        return ("*", n, _diff(n[1]))
    if tag == "sin":
        return ("*", ("cos", n[1]), _diff(n[1]))
    if tag == "cos":
        return ("neg", ("*", ("sin", n[1]), _diff(n[1])))
    a, b = n[1], n[2]
    if tag in "+-":
        return (tag, _diff(a), _diff(b))
    if tag == "*":
        return ("+", ("*", _diff(a), b), ("*", a, _diff(b)))
    if tag == "/":
        return ("/", ("-", ("*", _diff(a), b), ("*", a, _diff(b))), ("^", b, ("num", 2.0)))
    # power
    if not _has_var(b):
        return ("*", ("*", b, ("^", a, ("-", b, ("num", 1.0)))), _diff(a))
    # d(a^b) = a^b (b' log a + b a'/a); log is not in the grammar, so use a callable node
    return ("*", n, ("+", ("*", _diff(b), ("log", a)), ("/", ("*", b, _diff(a)), a)))


def compile_expression(text: str, var: str = "u") -> tuple[Callable, Callable]:
    """Parse ``text`` and return vectorised ``(g, g')`` in the variable ``var``.

    The grammar has ``+ - * / ^``, ``exp``, ``sin``, ``cos``, parentheses,
    numeric literals and the single variable.
    """
    tree = _Parser(text, var).parse()
    dtree = _diff(tree)

    def make(t):
        def fn(x):
            with np.errstate(all="ignore"):
                val = _eval(t, np.asarray(x, dtype=float))
            return float(val) if np.ndim(val) == 0 else val
        return fn

    return make(tree), make(dtree)


_BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}
_UNARY = dict(_FUNCS, log=np.log, neg=np.negative)


def _eval(n, x):
    tag = n[0]
    if tag == "num":
        return n[1] + 0.0 * x
    if tag == "var":
        return x
    if tag in _UNARY:
        return _UNARY[tag](_eval(n[1], x))
    return _BINARY[tag](_eval(n[1], x), _eval(n[2], x))


# --------------------------------------------------------- primitive of f

def adaptive_simpson(g: Callable, a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature of a scalar function on ``[a, b]``."""

    def simpson(fa, fm, fb, lo, hi):
        return (hi - lo) * (fa + 4.0 * fm + fb) / 6.0

    def rec(lo, hi, fa, fm, fb, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = g(lm), g(rm)
        left = simpson(fa, flm, fm, lo, mid)
        right = simpson(fm, frm, fb, mid, hi)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0
        return (rec(lo, mid, fa, flm, fm, left, eps / 2, depth - 1)
                + rec(mid, hi, fm, frm, fb, right, eps / 2, depth - 1))

    if a == b:
        return 0.0
    fa, fb, fm = g(a), g(b), g(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def quadrature_primitive(f: Callable, tol: float = 1e-10) -> Callable:
    """``F(t) = int_0^t f`` by adaptive Simpson, accumulated over sorted nodes."""
    fs = lambda s: float(f(s))

    def F(t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        flat = t_arr.ravel()
        out = np.empty_like(flat)
        for sign in (1.0, -1.0):
            idx = np.nonzero(sign * flat >= 0)[0]
            idx = idx[np.argsort(sign * flat[idx])]
            acc, prev = 0.0, 0.0
            for k in idx:
                acc += adaptive_simpson(fs, prev, flat[k], tol)
                prev = flat[k]
                out[k] = acc
        out = out.reshape(t_arr.shape)
        return out if np.ndim(t) else float(out[0])

    return F


def custom(expression: str, analytic: bool = False) -> SourceTerm:
    f, fp = compile_expression(expression, "u")
    return SourceTerm(f=f, f_prime=fp, F=quadrature_primitive(f), kind="Custom",
                      params={"expression": expression}, name=expression,
                      analytic=analytic)


REGISTRY_HELP = {
    "const:<H>": "f(u) = H, F(u) = H u",
    "capillary:<kappa>": "f(u) = -kappa u, F(u) = -kappa u^2 / 2",
    "<expression in u>": "custom f; grammar + - * / ^ exp sin cos ( ) u",
}


def parse_source(spec: str) -> SourceTerm:
    spec = spec.strip()
    for prefix, maker in (("const:", constant), ("capillary:", capillary)):
        if spec.startswith(prefix):
            try:
                return maker(float(spec[len(prefix):]))
            except ValueError:
                raise ConfigError(f"bad source parameter in {spec!r}") from None
    return custom(spec)


# --------------------------------------------------------- half-plane test

@dataclass(frozen=True)
class HalfPlaneReport:
    passed: bool
    F_max: float
    u_at_F_max: float
    F0: float
    threshold: float
    sample_range: tuple
    verdict_kind: str = "sampled"


def check_halfplane_condition(source: SourceTerm, c: float,
                              sample_range=(-100.0, 100.0), n: int = 10_000) -> HalfPlaneReport:
    """Necessary condition for a 1D solution with boundary slope ``c``.

    Requires ``F <= 0`` on the sampled range and ``F(0) >= 1/sqrt(1+c^2) - 1``.
    """
    u = np.linspace(sample_range[0], sample_range[1], n)
    Fu = np.asarray(source.F(u), dtype=float)
    k = int(np.argmax(Fu))
    F0 = float(source.F(0.0))
    thr = 1.0 / math.sqrt(1.0 + c * c) - 1.0
    return HalfPlaneReport(
        passed=bool(Fu[k] <= 0.0 and F0 >= thr),
        F_max=float(Fu[k]),
        u_at_F_max=float(u[k]),
        F0=F0,
        threshold=thr,
        sample_range=tuple(sample_range),
    )
