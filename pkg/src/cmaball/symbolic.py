"""Closed symbolic expression grammar over the real ball coordinates.

Expressions are trees over the variables ``x1, y1, ..., xn, yn`` with the
operations ``add, sub, mul, div, pow, neg, exp, log, sin, cos`` and real
constants.  They serialize to/from JSON, convert to sympy for exact
differentiation, and compile (via lambdify) to vectorized numpy callables.

All metric entries, densities and boundary data enter the toolkit in this
form, so every grid field has an exact analytic counterpart that can be
differentiated symbolically.
"""

from __future__ import annotations

import json

import numpy as np
import sympy as sp

_UNARY = {"neg", "exp", "log", "sin", "cos"}
_BINARY = {"sub", "div", "pow"}
_NARY = {"add", "mul"}

_VAR_CACHE: dict[str, sp.Symbol] = {}


def real_symbols(n: int) -> list[sp.Symbol]:
    """Ordered coordinate symbols [x1, y1, ..., xn, yn]."""
    names = []
    for i in range(1, n + 1):
        names += [f"x{i}", f"y{i}"]
    return [var(name) for name in names]


def var(name: str) -> sp.Symbol:
    if name not in _VAR_CACHE:
        _VAR_CACHE[name] = sp.Symbol(name, real=True)
    return _VAR_CACHE[name]


def complex_coords(n: int):
    """Symbols z_i = x_i + i*y_i, returned as sympy expressions."""
    xs = real_symbols(n)
    return [xs[2 * i] + sp.I * xs[2 * i + 1] for i in range(n)]


def to_tree(expr) -> dict:
    """Serialize a sympy expression into the JSON tree grammar."""
    expr = sp.sympify(expr)
    if expr.is_Symbol:
        return {"var": expr.name}
    if expr.is_Number:
        return {"const": float(expr)}
    if expr.is_Add:
        return {"op": "add", "args": [to_tree(a) for a in expr.args]}
    if expr.is_Mul:
        return {"op": "mul", "args": [to_tree(a) for a in expr.args]}
    if expr.is_Pow:
        base, exponent = expr.args
        return {"op": "pow", "args": [to_tree(base), to_tree(exponent)]}
    if isinstance(expr, sp.exp):
        return {"op": "exp", "args": [to_tree(expr.args[0])]}
    if isinstance(expr, sp.log):
        return {"op": "log", "args": [to_tree(expr.args[0])]}
    if isinstance(expr, sp.sin):
        return {"op": "sin", "args": [to_tree(expr.args[0])]}
    if isinstance(expr, sp.cos):
        return {"op": "cos", "args": [to_tree(expr.args[0])]}
    raise ValueError(f"expression outside the grammar: {expr}")


def from_tree(tree) -> sp.Expr:
    """Parse a JSON expression tree into a sympy expression."""
    if isinstance(tree, (int, float)):
        return sp.Float(tree)
    if not isinstance(tree, dict):
        raise ValueError(f"malformed expression node: {tree!r}")
    if "const" in tree:
        return sp.Float(tree["const"])
    if "var" in tree:
        name = tree["var"]
        if not _valid_var(name):
            raise ValueError(f"unknown variable {name!r}")
        return var(name)
    if "op" not in tree:
        raise ValueError(f"malformed expression node: {tree!r}")
    op = tree["op"]
    args = [from_tree(a) for a in tree.get("args", [])]
    if op in _NARY:
        if not args:
            raise ValueError(f"{op} needs at least one argument")
        return sp.Add(*args) if op == "add" else sp.Mul(*args)
    if op in _BINARY:
        if len(args) != 2:
            raise ValueError(f"{op} needs exactly two arguments")
        a, b = args
        if op == "sub":
            return a - b
        if op == "div":
            return a / b
        return a**b
    if op in _UNARY:
        if len(args) != 1:
            raise ValueError(f"{op} needs exactly one argument")
        a = args[0]
        return {"neg": lambda: -a, "exp": lambda: sp.exp(a),
                "log": lambda: sp.log(a), "sin": lambda: sp.sin(a),
                "cos": lambda: sp.cos(a)}[op]()
    raise ValueError(f"unknown operation {op!r}")


def _valid_var(name: str) -> bool:
    return (len(name) >= 2 and name[0] in "xy" and name[1:].isdigit()
            and int(name[1:]) >= 1)


def loads(text: str) -> sp.Expr:
    return from_tree(json.loads(text))


def dumps(expr) -> str:
    return json.dumps(to_tree(expr))


def compile_expr(expr, n: int):
    """Compile an expression to f(points) with points shaped (..., n) complex.

    The callable splits z_i into (x_i, y_i) internally and broadcasts.
    """
    syms = real_symbols(n)
    fn = sp.lambdify(syms, sp.sympify(expr), modules="numpy")

    def evaluate(points):
        points = np.asarray(points)
        coords = []
        for i in range(n):
            coords += [points[..., i].real, points[..., i].imag]
        out = fn(*coords)
        return np.broadcast_to(np.asarray(out), points.shape[:-1]).copy()

    return evaluate


def dz(expr, i: int):
    """Wirtinger derivative d/dz_i = (d/dx_i - i d/dy_i)/2 (1-based i)."""
    expr = sp.sympify(expr)
    x, y = var(f"x{i}"), var(f"y{i}")
    return (sp.diff(expr, x) - sp.I * sp.diff(expr, y)) / 2


def dzbar(expr, i: int):
    """Wirtinger derivative d/dzbar_i = (d/dx_i + i d/dy_i)/2 (1-based i)."""
    expr = sp.sympify(expr)
    x, y = var(f"x{i}"), var(f"y{i}")
    return (sp.diff(expr, x) + sp.I * sp.diff(expr, y)) / 2


class ExprMatrix:
    """An n x n matrix of grammar expressions, evaluable at arbitrary points.

    Used for Hermitian metric coefficients g_{i jbar}; entry (i, j) is the
    expression for g_{i jbar} in the real coordinates.
    """

    def __init__(self, entries, n: int | None = None):
        entries = [[sp.sympify(e) for e in row] for row in entries]
        self.n = n if n is not None else len(entries)
        if len(entries) != self.n or any(len(r) != self.n for r in entries):
            raise ValueError("entries must form a square matrix")
        self.entries = entries
        self._fns = [[compile_expr(e, self.n) for e in row] for row in entries]

    @classmethod
    def from_trees(cls, trees, n=None):
        return cls([[entry_from_tree(e) for e in row] for row in trees], n=n)

    def to_trees(self):
        return [[entry_to_tree(e) for e in row] for row in self.entries]

    def __call__(self, points):
        """Evaluate at points (..., n) -> complex matrices (..., n, n)."""
        points = np.asarray(points)
        out = np.empty(points.shape[:-1] + (self.n, self.n), dtype=complex)
        for i in range(self.n):
            for j in range(self.n):
                out[..., i, j] = self._fns[i][j](points)
        return out


def entry_to_tree(expr) -> dict:
    """Serialize a possibly complex-valued expression as {re, im} trees."""
    expr = sp.sympify(expr)
    re, im = expr.as_real_imag()
    if im == 0:
        return to_tree(re)
    return {"re": to_tree(re), "im": to_tree(im)}


def entry_from_tree(tree):
    if isinstance(tree, dict) and ("re" in tree or "im" in tree):
        re = from_tree(tree["re"]) if "re" in tree else sp.Integer(0)
        im = from_tree(tree["im"]) if "im" in tree else sp.Integer(0)
        return re + sp.I * im
    return from_tree(tree)


def euclidean_metric(n: int) -> ExprMatrix:
    return ExprMatrix([[sp.Integer(1) if i == j else sp.Integer(0)
                        for j in range(n)] for i in range(n)], n=n)
