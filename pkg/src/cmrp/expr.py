"""Tiny arithmetic expression language for user-defined tilt functions.

Grammar: numbers, ``+ - * / **``, parentheses, unary minus, the functions
``ln``/``log``, ``exp``, ``pow``, ``sqrt``, and the variables ``x``,
``theta1``/``θ₁``, ``theta2``/``θ₂`` (``theta`` is an alias of ``theta1``).
Compiled expressions evaluate elementwise on numpy arrays.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

from .errors import ConstraintError

_FUNCS = {"ln": np.log, "log": np.log, "exp": np.exp, "pow": np.power, "sqrt": np.sqrt}
_ALIASES = {"θ₁": "theta1", "θ₂": "theta2", "θ1": "theta1", "θ2": "theta2", "θ": "theta1", "^": "**", "−": "-"}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _normalize(text: str) -> str:
    for a, b in _ALIASES.items():
        text = text.replace(a, b)
    return text


def _check(node: ast.AST, allowed: set[str]) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, allowed)
    elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left, allowed)
        _check(node.right, allowed)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check(node.operand, allowed)
    elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if node.keywords:
            raise ConstraintError("keyword arguments are not allowed in expressions")
        for a in node.args:
            _check(a, allowed)
    elif isinstance(node, ast.Name):
        if node.id not in allowed:
            raise ConstraintError(f"unknown variable {node.id!r}; allowed: {sorted(allowed)}")
    elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        pass
    else:
        raise ConstraintError(f"unsupported syntax in expression: {ast.dump(node)[:60]}")


def _eval(node: ast.AST, env: dict[str, np.ndarray]):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](*[_eval(a, env) for a in node.args])  # type: ignore[union-attr]
    if isinstance(node, ast.Name):
        return env[node.id]
    return float(node.value)  # type: ignore[attr-defined]


def compile_expr(text: str, variables: set[str]) -> Callable[..., np.ndarray]:
    """Parse ``text`` and return a function of keyword arrays named by ``variables``."""
    src = _normalize(text.strip())
    allowed = set(variables) | ({"theta"} if "theta1" in variables else set())
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConstraintError(f"cannot parse expression {text!r}: {exc.msg}") from exc
    _check(tree, allowed)

    def fn(**env):
        if "theta1" in env:
            env["theta"] = env["theta1"]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.asarray(_eval(tree, env), dtype=float)

    fn.source = text  # type: ignore[attr-defined]
    return fn


def claim_function(text: str) -> Callable[[np.ndarray], np.ndarray]:
    f = compile_expr(text, {"x"})
    return lambda x: np.broadcast_to(f(x=np.asarray(x, dtype=float)), np.shape(x)).astype(float)


def theta_function(text: str, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    names = {f"theta{i + 1}" for i in range(dim)}
    f = compile_expr(text, names)

    def g(rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        env = {f"theta{i + 1}": rows[:, i] for i in range(dim)}
        return np.broadcast_to(f(**env), (rows.shape[0],)).astype(float)

    return g
