"""Vectorised arithmetic expressions for structural equations.

Expressions use Python syntax restricted to a small whitelist: numeric
literals, names, ``+ - * / **``, unary minus,
comparisons, ``and``/``or``/``not``, ``a if cond else b`` and the functions in
:data:`FUNCTIONS`.  They compile to closures over numpy arrays, so a single
evaluation handles every Monte-Carlo sample at once.
"""

from __future__ import annotations

import ast
import operator
from typing import Callable, Mapping

import numpy as np


class ExpressionError(ValueError):
    """The expression text is not in the supported language."""


class EvaluationError(ArithmeticError):
    """An expression left its domain (log of a non-positive value, division by zero...)."""


def _guarded_log(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise EvaluationError("log of a non-positive value")
    return np.log(x)


def _guarded_sqrt(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise EvaluationError("sqrt of a negative value")
    return np.sqrt(x)


def _guarded_div(a, b):
    b = np.asarray(b, dtype=float)
    if np.any(b == 0):
        raise EvaluationError("division by zero")
    return np.divide(a, b)


def _guarded_pow(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any((a < 0) & (np.mod(b, 1) != 0)):
        raise EvaluationError("fractional power of a negative value")
    if np.any((a == 0) & (b < 0)):
        raise EvaluationError("negative power of zero")
    return np.power(a, b)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def _where(cond, a, b):
    return np.where(np.asarray(cond, dtype=bool), a, b)


FUNCTIONS: dict[str, Callable] = {
    "exp": np.exp,
    "log": _guarded_log,
    "sqrt": _guarded_sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
    "pow": _guarded_pow,
    "sigmoid": _sigmoid,
    "where": _where,
}

CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: _guarded_div,
    ast.Pow: _guarded_pow,
}

_CMPOPS = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
    ast.Eq: np.equal,
    ast.NotEq: np.not_equal,
}


class Expression:
    """A parsed expression.

    >>> e = Expression("2 * X + max(U, 0)")
    >>> sorted(e.names)
    ['U', 'X']
    >>> float(e.evaluate({"X": 1.5, "U": -1.0}))
    3.0
    """

    def __init__(self, source: str):
        self.source = source.strip()
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.source!r}: {exc.msg}") from None
        self.names: frozenset[str] = frozenset()
        names: set[str] = set()
        self._fn = self._compile(tree.body, names)
        self.names = frozenset(names)

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and self.source == other.source

    def __hash__(self):
        return hash(self.source)

    def evaluate(self, env: Mapping[str, np.ndarray | float]):
        return self._fn(env)

    def _compile(self, node, names: set) -> Callable:
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"unsupported literal {node.value!r}")
            value = float(node.value)
            return lambda env: value
        if isinstance(node, ast.Name):
            name = node.id
            if name in CONSTANTS:
                value = CONSTANTS[name]
                return lambda env: value
            if name in FUNCTIONS:
                raise ExpressionError(f"function {name} used as a value")
            names.add(name)
            return lambda env: env[name]
        if isinstance(node, ast.UnaryOp):
            inner = self._compile(node.operand, names)
            if isinstance(node.op, ast.USub):
                return lambda env: -inner(env)
            if isinstance(node.op, ast.UAdd):
                return inner
            if isinstance(node.op, ast.Not):
                return lambda env: np.logical_not(inner(env))
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            left = self._compile(node.left, names)
            right = self._compile(node.right, names)
            return lambda env: op(left(env), right(env))
        if isinstance(node, ast.Compare):
            parts = [self._compile(node.left, names)]
            parts += [self._compile(c, names) for c in node.comparators]
            ops = []
            for op in node.ops:
                if type(op) not in _CMPOPS:
                    raise ExpressionError(f"unsupported comparison in {self.source!r}")
                ops.append(_CMPOPS[type(op)])

            def compare(env):
                values = [p(env) for p in parts]
                out = ops[0](values[0], values[1])
                for i in range(1, len(ops)):
                    out = np.logical_and(out, ops[i](values[i], values[i + 1]))
                return out

            return compare
        if isinstance(node, ast.BoolOp):
            parts = [self._compile(v, names) for v in node.values]
            combine = np.logical_and if isinstance(node.op, ast.And) else np.logical_or

            def boolop(env):
                out = parts[0](env)
                for p in parts[1:]:
                    out = combine(out, p(env))
                return out

            return boolop
        if isinstance(node, ast.IfExp):
            cond = self._compile(node.test, names)
            a = self._compile(node.body, names)
            b = self._compile(node.orelse, names)
            return lambda env: _where(cond(env), a(env), b(env))
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExpressionError(f"unknown function in {self.source!r}")
            if node.keywords:
                raise ExpressionError("keyword arguments are not supported")
            fn = FUNCTIONS[node.func.id]
            args = [self._compile(a, names) for a in node.args]
            return lambda env: fn(*(a(env) for a in args))
        raise ExpressionError(f"unsupported syntax {type(node).__name__} in {self.source!r}")
