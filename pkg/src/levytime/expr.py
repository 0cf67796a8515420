"""A small, total expression grammar for speed functions and time profiles.

Grammar: numeric literals, ``pi``, the variables of the context (``x`` in
1-d, ``x1 .. xd`` otherwise, or ``t`` for time profiles), binary ``+ - * /``,
unary ``-``, and the calls ``min(a, b, ...)``, ``max(a, b, ...)``, ``abs(a)``,
``sqrt(a)`` and ``pow(a, b)``. Expressions are parsed with :mod:`ast` and
compiled to numpy closures; nothing is ever executed as Python code.
"""

from __future__ import annotations

import ast
import functools
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import ParseError, ValidationError

# name -> (min args, max args or None, implementation)
_FUNCS = {
    "min": (2, None, lambda *a: functools.reduce(np.minimum, a)),
    "max": (2, None, lambda *a: functools.reduce(np.maximum, a)),
    "abs": (1, 1, np.abs),
    "sqrt": (1, 1, np.sqrt),
    "pow": (2, 2, np.power),
}
_CONSTS = {"pi": math.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


def _where(node) -> str:
    return f"column {getattr(node, 'col_offset', 0) + 1}"


class Expression:
    """A compiled expression; call it with keyword arrays for its variables."""

    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.variables = tuple(variables)
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as e:
            raise ParseError(f"cannot parse {text!r}: {e.msg} at column {e.offset}") from None
        self._fn = self._compile(tree.body)

    def _compile(self, node) -> Callable:
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ParseError(f"unsupported literal {node.value!r} at {_where(node)}")
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            if node.id in self.variables:
                name = node.id
                return lambda env: env[name]
            if node.id in _CONSTS:
                v = _CONSTS[node.id]
                return lambda env: v
            raise ParseError(f"unknown name {node.id!r} at {_where(node)}; allowed: {', '.join(self.variables)}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = self._compile(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda env: np.negative(inner(env))
            return inner
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            left, right = self._compile(node.left), self._compile(node.right)
            return lambda env: op(left(env), right(env))
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                name = getattr(node.func, "id", "?")
                raise ParseError(f"unknown function {name!r} at {_where(node)}")
            if node.keywords:
                raise ParseError(f"keyword arguments are not allowed at {_where(node)}")
            lo, hi, impl = _FUNCS[node.func.id]
            k = len(node.args)
            if k < lo or (hi is not None and k > hi):
                want = f"{lo}" if lo == hi else f"at least {lo}"
                raise ParseError(f"{node.func.id} takes {want} argument(s), got {k} at {_where(node)}")
            args = [self._compile(a) for a in node.args]
            return lambda env: impl(*[a(env) for a in args])
        raise ParseError(f"unsupported syntax {type(node).__name__} at {_where(node)}")

    def __call__(self, **env):
        with np.errstate(all="ignore"):
            out = self._fn(env)
        shape = np.broadcast_shapes(*(np.shape(v) for v in env.values())) if env else ()
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else float(out)

    def __repr__(self):
        return f"Expression({self.text!r})"


def state_variables(dim: int) -> tuple:
    return ("x",) if dim == 1 else tuple(f"x{i + 1}" for i in range(dim))


def parse_expression(text: str, variables: Sequence[str]) -> Expression:
    return Expression(text, variables)


def parse_profile(text: str) -> Callable:
    """A time profile ``Y(t)`` from an expression in ``t``."""
    e = Expression(text, ("t",))
    return lambda t: e(t=np.asarray(t, dtype=float))


def default_probe(dim: int) -> np.ndarray:
    if dim == 1:
        return np.linspace(-10.0, 10.0, 2001)[:, None]
    n = max(3, int(round(4096 ** (1.0 / dim))))
    axes = np.meshgrid(*[np.linspace(-10.0, 10.0, n)] * dim, indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=-1)


def _locate_zeros_1d(f, xs: np.ndarray, vals: np.ndarray, bound: float, threshold: float) -> list:
    zeros = []
    flat = vals <= threshold
    # runs of zero samples: keep both endpoints
    i = 0
    n = xs.size
    while i < n:
        if flat[i]:
            j = i
            while j + 1 < n and flat[j + 1]:
                j += 1
            zeros.append(xs[i])
            if j > i:
                zeros.append(xs[j])
            i = j + 1
        else:
            i += 1
    # isolated minima between probes
    small = 1e-3 * bound
    for i in range(1, n - 1):
        if flat[i] or not (vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1] and vals[i] < small):
            continue
        fz = lambda z: float(f(np.array([[z]]))[0])  # noqa: E731
        try:
            # golden section reaches kink minima to rounding; bounded Brent stops near sqrt(eps)
            res = optimize.minimize_scalar(fz, bracket=(xs[i - 1], xs[i], xs[i + 1]), method="golden",
                                           options={"xtol": 1e-15})
        except ValueError:
            res = optimize.minimize_scalar(fz, bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                                           options={"xatol": 1e-12})
        if xs[i - 1] <= res.x <= xs[i + 1] and res.fun <= threshold:
            zeros.append(float(res.x))
    zeros = sorted(set(float(z) for z in zeros))
    out = []
    for z in zeros:
        if not out or z - out[-1] > 1e-9:
            out.append(z)
    return out


def _locate_zeros_nd(f, xs: np.ndarray, vals: np.ndarray, bound: float, threshold: float) -> list:
    # coarse probes can sit far from a zero, so the smallest values are refined regardless of size
    order = np.argsort(vals, kind="stable")[:32]
    cands = []
    for i in order:
        res = optimize.minimize(lambda z: float(f(z[None, :])[0]), xs[i], method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14})
        if res.fun <= threshold:
            cands.append(res.x)
    out = []
    for c in cands:
        if all(np.linalg.norm(c - o) > 1e-6 for o in out):
            out.append(c)
    return out


def parse_g(text: str, dim: int = 1, probe=None, growth_exponent: Optional[float] = None,
            threshold: float = 1e-12):
    """Parse a speed function ``g`` and wrap it as a :class:`~levytime.tce.GFunction`.

    The bound is the maximum over the probe grid (default ``[-10, 10]^d``);
    zeros are probe minima at or below ``threshold`` after local refinement.
    A negative value anywhere on the probe grid is a validation error.
    """
    from .tce import GFunction

    names = state_variables(dim)
    e = Expression(text, names)

    def evaluator(x):
        x = np.asarray(x, dtype=float)
        env = {n: x[:, i] for i, n in enumerate(names)}
        return np.array(np.broadcast_to(e(**env), (x.shape[0],)), dtype=float)

    xs = default_probe(dim) if probe is None else np.asarray(probe, dtype=float).reshape(-1, dim)
    vals = evaluator(xs)
    if not np.all(np.isfinite(vals)):
        i = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ValidationError(f"g = {text!r} is not finite at x = {xs[i].tolist()}")
    if np.any(vals < 0):
        i = int(np.argmin(vals))
        raise ValidationError(f"g = {text!r} is negative at x = {xs[i].tolist()} (value {vals[i]})")
    bound = float(np.max(vals))
    if not bound > 0:
        raise ValidationError(f"g = {text!r} vanishes on the whole probe grid")
    if dim == 1:
        zeros = _locate_zeros_1d(evaluator, xs[:, 0], vals, bound, threshold)
    else:
        zeros = _locate_zeros_nd(evaluator, xs, vals, bound, threshold)
    return GFunction(evaluator, bound=bound, declared_zeros=zeros, growth_exponent=growth_exponent,
                     dim=dim, name=text, probe=xs)
