"""Small arithmetic expression language for configuration files.

Expressions use ``+ - * / ^`` (``**`` is accepted too), parentheses, numeric
literals, the constant ``pi``, the functions ``sin cos exp abs pow sqrt cbrt``
and a fixed set of variable names (``x1, x2, t`` by default). They are parsed
with :mod:`ast` against a whitelist and converted to :mod:`sympy`, so exact
derivatives are available for manufactured source terms.
"""
from __future__ import annotations

import ast

import numpy as np
import sympy as sp

DEFAULT_VARS = ("x1", "x2", "t")


class cbrt(sp.Function):
    """Real cube root (odd extension to negative arguments)."""

    def fdiff(self, argindex=1):
        return 1 / (3 * cbrt(self.args[0]) ** 2)


_MODULES = [{"cbrt": np.cbrt}, "numpy"]
_FUNCS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "abs": sp.Abs,
    "pow": lambda a, b: a ** b,
    "sqrt": sp.sqrt,
    "cbrt": cbrt,
}
_CONSTS = {"pi": sp.pi}


class ExpressionError(ValueError):
    """The expression text is not in the accepted language."""


def _to_sympy(node, symbols):
    if isinstance(node, ast.Expression):
        return _to_sympy(node.body, symbols)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return sp.nsimplify(node.value) if isinstance(node.value, int) else sp.Float(node.value)
    if isinstance(node, ast.Name):
        if node.id in symbols:
            return symbols[node.id]
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _to_sympy(node.operand, symbols)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        a, b = _to_sympy(node.left, symbols), _to_sympy(node.right, symbols)
        ops = {ast.Add: lambda: a + b, ast.Sub: lambda: a - b, ast.Mult: lambda: a * b,
               ast.Div: lambda: a / b, ast.Pow: lambda: a ** b}
        for k, fn in ops.items():
            if isinstance(node.op, k):
                return fn()
        raise ExpressionError(f"operator {type(node.op).__name__} is not allowed")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only sin, cos, exp, abs, pow, sqrt and cbrt may be called")
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        args = [_to_sympy(a, symbols) for a in node.args]
        want = 2 if node.func.id == "pow" else 1
        if len(args) != want:
            raise ExpressionError(f"{node.func.id} takes {want} argument(s)")
        return _FUNCS[node.func.id](*args)
    raise ExpressionError(f"unsupported syntax: {type(node).__name__}")


class Expression:
    """A parsed expression, callable on point arrays.

    Parameters
    ----------
    text : str or number
    variables : sequence of str
        Variable names in call order.

    Notes
    -----
    ``expr(x)`` evaluates at points ``x`` of shape (..., d) where the first
    ``d`` variables are the coordinates; a trailing time variable ``t`` may
    be passed as ``expr(x, t)`` (default 0).
    """

    def __init__(self, text, variables=DEFAULT_VARS):
        self.text = str(text)
        self.variables = tuple(variables)
        self.symbols = {v: sp.Symbol(v, real=True) for v in self.variables}
        src = self.text.replace("^", "**")
        try:
            tree = ast.parse(src, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.text!r}: {exc.msg}") from exc
        self.sym = _to_sympy(tree, self.symbols)
        self._fn = sp.lambdify([self.symbols[v] for v in self.variables], self.sym, _MODULES)

    @classmethod
    def from_sympy(cls, expr, variables=DEFAULT_VARS):
        obj = cls.__new__(cls)
        obj.variables = tuple(variables)
        obj.symbols = {v: sp.Symbol(v, real=True) for v in obj.variables}
        obj.sym = sp.sympify(expr).subs({sp.Symbol(v): obj.symbols[v] for v in obj.variables})
        obj.text = str(obj.sym)
        obj._fn = sp.lambdify([obj.symbols[v] for v in obj.variables], obj.sym, _MODULES)
        return obj

    def __repr__(self):
        return f"Expression({self.text!r})"

    def evaluate(self, *args):
        """Evaluate with one array per variable (broadcast together)."""
        arrs = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
        out = self._fn(*arrs)
        return np.broadcast_to(np.asarray(out, dtype=float), arrs[0].shape).copy()

    def __call__(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        coords = [x[..., i] for i in range(d)]
        rest = []
        for v in self.variables[d:]:
            rest.append(np.full(x.shape[:-1], float(t)) if v == "t" else np.zeros(x.shape[:-1]))
        return self.evaluate(*coords, *rest)

    def diff(self, var: str) -> "Expression":
        return Expression.from_sympy(sp.diff(self.sym, self.symbols[var]), self.variables)

    def subs(self, **values) -> "Expression":
        return Expression.from_sympy(
            self.sym.subs({self.symbols[k]: v for k, v in values.items()}), self.variables
        )

    def gradient(self, d: int) -> list:
        return [self.diff(self.variables[i]) for i in range(d)]

    def at_time(self, t: float) -> "Expression":
        if "t" not in self.symbols:
            return self
        return self.subs(t=t)


def parse(text, variables=DEFAULT_VARS) -> Expression:
    """Parse ``text`` (numbers are accepted as constant expressions)."""
    if isinstance(text, Expression):
        return text
    return Expression(text, variables)


def vector_callable(exprs):
    """Stack scalar expressions into a callable returning (..., k)."""
    exprs = [parse(e) for e in exprs]

    def f(x, t=0.0):
        return np.stack([e(x, t) for e in exprs], axis=-1)

    return f


def laplacian_of(expr: Expression, d: int) -> Expression:
    s = expr.symbols
    v = expr.variables
    return Expression.from_sympy(sum(sp.diff(expr.sym, s[v[i]], 2) for i in range(d)), v)
