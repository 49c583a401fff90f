"""Small vectorized expression language for user-supplied dynamics.

Grammar: numbers, variables, ``pi``, ``e``, unary ``+``/``-``, binary
``+ - * / ^`` (``^`` is exponentiation, right associative) and the
functions ``sin cos tanh atan exp ln abs``.  Expressions are parsed with
Python's ``ast`` module and checked against this whitelist before they are
turned into numpy closures; nothing is ever passed to ``eval``.
"""

from __future__ import annotations

import ast
import json
import math
import operator
from typing import Callable, Iterable

import numpy as np

GRAMMAR_VERSION = 1

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "atan": np.arctan,
    "exp": np.exp,
    "ln": np.log,
    "abs": np.abs,
}
CONSTANTS = {"pi": math.pi, "e": math.e}
_BINARY = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class ExpressionError(ValueError):
    """Malformed expression or use of a name outside the grammar."""


def state_names(dim: int) -> dict:
    """Accepted spellings of the state components, mapped to their index."""
    names = {}
    for i in range(dim):
        names[f"x{i + 1}"] = i
        names[f"x_{i + 1}"] = i
    if dim == 1:
        names["x"] = 0
    return names


def compile_expression(source: str, variables: Iterable[str]) -> Callable:
    """Compile ``source`` into ``fn(env) -> array`` over the allowed ``variables``."""
    if not isinstance(source, str) or not source.strip():
        raise ExpressionError("expression must be a nonempty string")
    allowed = set(variables)
    try:
        tree = ast.parse(source.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    return _build(tree.body, allowed, source)


def _build(node, allowed, source):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        name = node.id
        if name in allowed:
            return lambda env: env[name]
        if name in CONSTANTS:
            value = CONSTANTS[name]
            return lambda env: value
        raise ExpressionError(f"unknown name {name!r} in {source!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        op = _BINARY[type(node.op)]
        left, right = _build(node.left, allowed, source), _build(node.right, allowed, source)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op = _UNARY[type(node.op)]
        inner = _build(node.operand, allowed, source)
        return lambda env: op(inner(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        fname = node.func.id
        if fname not in FUNCTIONS:
            raise ExpressionError(f"unknown function {fname!r} in {source!r}")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{fname} takes exactly one argument")
        fn = FUNCTIONS[fname]
        arg = _build(node.args[0], allowed, source)
        return lambda env: fn(arg(env))
    raise ExpressionError(f"unsupported syntax in {source!r}: {type(node).__name__}")


def vector_field(exprs, dim: int, times: tuple = ("t", "tau")) -> Callable:
    """``fn(x, *times)`` stacking one compiled expression per state component.

    The result has shape ``broadcast(times) + (dim,)``.
    """
    if isinstance(exprs, str):
        exprs = [exprs]
    if len(exprs) != dim:
        raise ExpressionError(f"expected {dim} component expressions, got {len(exprs)}")
    names = state_names(dim)
    comps = [compile_expression(e, list(names) + list(times)) for e in exprs]

    def fn(x, *args):
        env = {k: x[i] for k, i in names.items()}
        arrs = np.broadcast_arrays(*[np.asarray(a, float) for a in args]) if args else []
        env.update(zip(times, arrs))
        shape = arrs[0].shape if arrs else ()
        with np.errstate(all="ignore"):
            vals = [np.broadcast_to(np.asarray(c(env), float), shape) for c in comps]
        return np.stack(vals, axis=-1)

    return fn


def scalar_function(expr: str, dim: int, times: tuple = ("t",)) -> Callable:
    """``fn(x, *times) -> float`` for a scalar expression of the state."""
    names = state_names(dim)
    comp = compile_expression(expr, list(names) + list(times))

    def fn(x, *args):
        env = {k: x[i] for k, i in names.items()}
        env.update(zip(times, args))
        return float(comp(env))

    return fn


def gauge_function(expr: str, var: str = "s") -> Callable:
    comp = compile_expression(expr, [var])
    return lambda s: np.asarray(comp({var: np.asarray(s, float)}), float) * np.ones_like(np.asarray(s, float))


def load_description(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        desc = json.load(fh)
    if not isinstance(desc, dict):
        raise ExpressionError("system description must be a JSON object")
    return desc
