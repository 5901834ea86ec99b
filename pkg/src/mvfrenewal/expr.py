"""A deliberately small arithmetic language for coefficients in config files.

Grammar: numbers, ``+ - * /``, unary minus, parentheses, ``exp(.)`` and
the identifiers allowed by the caller (``t``, ``x``, ``s``, ``tau`` and
user-defined numeric symbols). History arguments are reached through
``q(s)`` / ``w(s)`` (value of the total-size / density segment at offset
``s``) and ``qmean()`` / ``wmean()`` (segment averages). Anything else,
including attribute access, comparisons and other calls, is rejected at
parse time.
"""

from __future__ import annotations

import ast
import operator

import numpy as np


class ExpressionError(ValueError):
    pass


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}
_SEGMENT_CALLS = {"q": ("q", 1), "w": ("w", 1), "qmean": ("q", 0), "wmean": ("w", 0)}


class Expression:
    """A parsed expression; call it with keyword arguments for its variables."""

    def __init__(self, source, variables=("t", "x"), segments=(), symbols=None):
        if not isinstance(source, (str, int, float)):
            raise ExpressionError(f"expression must be a string or number, got {type(source).__name__}")
        self.source = str(source)
        self.variables = tuple(variables)
        self.segments = tuple(segments)
        self.symbols = dict(symbols or {})
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.source!r}: {exc.msg}") from None
        self.used = set()
        self._fn = self._compile(tree.body)

    @property
    def is_constant(self):
        return not self.used

    def _compile(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"only numeric literals are allowed in {self.source!r}")
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            name = node.id
            if name in self.variables:
                self.used.add(name)
                return lambda env: env[name]
            if name in self.symbols:
                v = float(self.symbols[name])
                return lambda env: v
            raise ExpressionError(f"unknown identifier {name!r} in {self.source!r}; "
                                  f"allowed: {', '.join(self.variables + tuple(self.symbols))}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            left, right = self._compile(node.left), self._compile(node.right)
            return lambda env: op(left(env), right(env))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = self._compile(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda env: -inner(env)
            return inner
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            return self._compile_call(node.func.id, node.args)
        raise ExpressionError(f"construct {type(node).__name__} not allowed in {self.source!r}")

    def _compile_call(self, name, args):
        if name == "exp":
            if len(args) != 1:
                raise ExpressionError("exp takes one argument")
            inner = self._compile(args[0])
            return lambda env: np.exp(inner(env))
        if name in _SEGMENT_CALLS:
            seg, nargs = _SEGMENT_CALLS[name]
            if seg not in self.segments:
                raise ExpressionError(f"{name}() is not available here (segments allowed: {self.segments or 'none'})")
            if len(args) != nargs:
                raise ExpressionError(f"{name} takes {nargs} argument(s)")
            self.used.add(seg)
            if nargs == 0:
                return lambda env: env[seg].mean()
            off = self._compile(args[0])
            return lambda env: env[seg].at(float(off(env)))
        raise ExpressionError(f"function {name!r} not allowed in {self.source!r}")

    def __call__(self, **env):
        return self._fn(env)

    def __repr__(self):
        return f"Expression({self.source!r})"
