"""Small arithmetic expression language for scenario files.

Coefficient profiles and angles arrive as strings like ``"1 + 0.5*cos(pi*xi)"``
or ``"pi/2"``.  They are compiled through the :mod:`ast` module against a
whitelist of node types and function names, so nothing outside plain
arithmetic can execute.
"""
from __future__ import annotations

import ast
from typing import Callable

import numpy as np

from .errors import ExpressionError

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

_CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}

_UNARYOPS = {ast.UAdd: lambda v: v, ast.USub: np.negative}


def _eval_node(node: ast.AST, names: dict):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, names)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            return float(node.value)
        raise ExpressionError(f"literal {node.value!r} is not a number")
    if isinstance(node, ast.Name):
        if node.id in names:
            return names[node.id]
        if node.id in _CONSTANTS:
            return _CONSTANTS[node.id]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](
            _eval_node(node.left, names), _eval_node(node.right, names)
        )
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARYOPS:
        return _UNARYOPS[type(node.op)](_eval_node(node.operand, names))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise ExpressionError("only plain calls like sin(xi) are supported")
        fname = node.func.id
        if fname not in _FUNCTIONS:
            raise ExpressionError(f"unknown function {fname!r}")
        if len(node.args) != 1:
            raise ExpressionError(f"{fname}() takes exactly one argument")
        return _FUNCTIONS[fname](_eval_node(node.args[0], names))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def _parse(text: str) -> ast.Expression:
    try:
        return ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from exc


def evaluate_scalar(text: str) -> float:
    """Evaluate an expression with no free variable, e.g. ``"pi/2"`` or ``"1/3"``."""
    tree = _parse(text)
    value = _eval_node(tree, {})
    return float(value)


def compile_profile(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an expression in the spatial variable ``xi`` into a vectorized callable.

    The returned function broadcasts over ndarray input and always returns an
    array of the same shape, even if the expression is constant.
    """
    tree = _parse(text)
    _eval_node(tree, {"xi": np.array([0.0, 0.5])})  # validate names eagerly

    def fun(xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = _eval_node(tree, {"xi": xi})
        return np.broadcast_to(np.asarray(out, dtype=float), xi.shape).copy()

    fun.expression = text  # type: ignore[attr-defined]
    return fun


def parse_number(value) -> float:
    """Accept a plain number or a constant expression string such as ``"1/7"``."""
    if isinstance(value, bool):
        raise ExpressionError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return evaluate_scalar(value)
    raise ExpressionError(f"expected a number or expression string, got {type(value).__name__}")
