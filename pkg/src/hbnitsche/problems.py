"""Manufactured solutions and source terms for the clamped biharmonic problem."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sp

X, Y = sp.symbols("x y", real=True)

_NAMESPACE = {"x": X, "y": Y, "pi": sp.pi, "sin": sp.sin, "cos": sp.cos, "exp": sp.exp,
              "sqrt": sp.sqrt, "tanh": sp.tanh, "log": sp.log, "abs": sp.Abs}


def _compile(expr):
    fn = sp.lambdify((X, Y), expr, modules="numpy")

    def call(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(fn(x, y), dtype=float), np.broadcast(x, y).shape).copy()

    return call


def _lap(e):
    return sp.diff(e, X, 2) + sp.diff(e, Y, 2)


@dataclass
class ManufacturedSolution:
    """Closed forms of u, grad u, lap u, grad lap u and f = bilap u."""

    id: str
    expr: sp.Expr
    boundary_conforming: bool = False
    _fns: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        u = self.expr
        lap = _lap(u)
        forms = {
            "u": u,
            "ux": sp.diff(u, X),
            "uy": sp.diff(u, Y),
            "lap": lap,
            "lap_x": sp.diff(lap, X),
            "lap_y": sp.diff(lap, Y),
            "f": _lap(lap),
        }
        self._fns.update({k: _compile(v) for k, v in forms.items()})

    def u(self, x, y):
        return self._fns["u"](x, y)

    def grad(self, x, y):
        return self._fns["ux"](x, y), self._fns["uy"](x, y)

    def lap(self, x, y):
        return self._fns["lap"](x, y)

    def lap_grad(self, x, y):
        return self._fns["lap_x"](x, y), self._fns["lap_y"](x, y)

    def f(self, x, y):
        return self._fns["f"](x, y)

    __call__ = u


@dataclass
class SourceTerm:
    """A right-hand side with no known exact solution."""

    id: str
    expr: sp.Expr
    _fn: Optional[object] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self._fn = _compile(self.expr)

    def f(self, x, y):
        return self._fn(x, y)


def parse(text: str) -> sp.Expr:
    """Parse an expression in x, y (with pi, sin, cos, exp, ...)."""
    return sp.sympify(text, locals=_NAMESPACE)


_bubble = sp.sin(sp.pi * X) ** 2 * sp.sin(sp.pi * Y) ** 2

REGISTRY = {
    "smooth": lambda: ManufacturedSolution("smooth", _bubble, boundary_conforming=True),
    "peak": lambda: ManufacturedSolution(
        "peak",
        _bubble * sp.exp(-((X - sp.Rational(7, 10)) ** 2 + (Y - sp.Rational(7, 10)) ** 2) / sp.Rational(5, 1000)),
        boundary_conforming=True,
    ),
    "zero": lambda: ManufacturedSolution("zero", sp.Integer(0), boundary_conforming=True),
}

_cache = {}


def get(problem_id: str) -> ManufacturedSolution:
    if problem_id not in REGISTRY:
        raise KeyError(f"unknown problem {problem_id!r}; known: {sorted(REGISTRY)}")
    if problem_id not in _cache:
        _cache[problem_id] = REGISTRY[problem_id]()
    return _cache[problem_id]


def from_expression(text: str, problem_id: str = "user", boundary_conforming: bool = False) -> ManufacturedSolution:
    return ManufacturedSolution(problem_id, parse(text), boundary_conforming=boundary_conforming)


def source(text: str, problem_id: str = "user-f") -> SourceTerm:
    return SourceTerm(problem_id, parse(text))
