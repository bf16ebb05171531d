"""Closed-form scalar expressions over (x, y, t) for config-declared data.

Grammar: + - * / ^ (also **), unary minus, numeric literals, names x, y, t,
constants pi and e, calls sin, cos, exp, abs, and min/max with two or more
arguments.  Everything else is rejected at compile time with the offending
source span.  Evaluation broadcasts NumPy-style.
"""

from __future__ import annotations

import ast

import numpy as np

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
}
_REDUCERS = {"min": np.minimum, "max": np.maximum}
_CONSTS = {"pi": np.pi, "e": np.e}
_VARIABLES = ("x", "y", "t")
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a ** b,
    # caret is exponentiation in this grammar, not xor
    ast.BitXor: lambda a, b: a ** b,
}


class ExpressionError(ValueError):
    pass


def _fail(node, text: str, msg: str):
    col = getattr(node, "col_offset", 0)
    snippet = text[col:col + 20]
    raise ExpressionError(f"{msg} at column {col}: {snippet!r}")


def _validate(node, text: str) -> None:
    if isinstance(node, ast.Expression):
        _validate(node.body, text)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            _fail(node, text, "only numeric literals are allowed")
    elif isinstance(node, ast.Name):
        if node.id not in _VARIABLES and node.id not in _CONSTS:
            _fail(node, text, f"unknown name {node.id!r}")
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            _fail(node, text, "operator not allowed")
        _validate(node.left, text)
        _validate(node.right, text)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            _fail(node, text, "unary operator not allowed")
        _validate(node.operand, text)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name):
            _fail(node, text, "only plain function names may be called")
        name = node.func.id
        if name in _FUNCS:
            if len(node.args) != 1:
                _fail(node, text, f"{name} takes exactly one argument")
        elif name in _REDUCERS:
            if len(node.args) < 2:
                _fail(node, text, f"{name} needs at least two arguments")
        else:
            _fail(node, text, f"unknown function {name!r}")
        if node.keywords:
            _fail(node, text, "keyword arguments not allowed")
        for arg in node.args:
            _validate(arg, text)
    else:
        _fail(node, text, f"syntax element {type(node).__name__} not allowed")


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        return _CONSTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env),
                                      _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else +v
    if isinstance(node, ast.Call):
        name = node.func.id
        args = [_eval(a, env) for a in node.args]
        if name in _FUNCS:
            return _FUNCS[name](args[0])
        out = args[0]
        for a in args[1:]:
            out = _REDUCERS[name](out, a)
        return out
    raise AssertionError("unvalidated node slipped through")


class Expression:
    """Compiled expression; call with (x, y, t) scalars or arrays."""

    def __init__(self, text: str):
        self.text = text
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"parse error in {text!r}: {exc.msg}") from exc
        _validate(tree, text)
        self._tree = tree
        self.names = {
            node.id for node in ast.walk(tree)
            if isinstance(node, ast.Name) and node.id in _VARIABLES
        }

    def __call__(self, x, y, t):
        env = {"x": np.asarray(x, dtype=float),
               "y": np.asarray(y, dtype=float),
               "t": t}
        return np.asarray(_eval(self._tree, env), dtype=float)

    def __repr__(self):
        return f"Expression({self.text!r})"


def compile_expression(text: str) -> Expression:
    return Expression(text)
