"""Small arithmetic expressions over state variables.

Grammar: numbers, the names ``x0, x1, ...`` (or user-chosen variable names),
the constants ``pi`` and ``e``, binary ``+ - * / **``, unary ``-``, and the
functions ``sin``, ``cos``, ``exp``. Expressions compile to vectorized
callables over arrays of shape ``(n, d)``.
"""
import ast

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
CONSTANTS = {"pi": np.pi, "e": np.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}


class ExpressionError(ValueError):
    pass


def _compile_node(node, variables):
    if isinstance(node, ast.Expression):
        return _compile_node(node.body, variables)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda X: np.full(len(X), value)
    if isinstance(node, ast.Name):
        if node.id in variables:
            k = variables.index(node.id)
            return lambda X: X[:, k]
        if node.id in CONSTANTS:
            value = CONSTANTS[node.id]
            return lambda X: np.full(len(X), value)
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile_node(node.operand, variables)
        if isinstance(node.op, ast.USub):
            return lambda X: -inner(X)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left = _compile_node(node.left, variables)
        right = _compile_node(node.right, variables)
        return lambda X: op(left(X), right(X))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in FUNCTIONS and len(node.args) == 1 and not node.keywords:
        fn = FUNCTIONS[node.func.id]
        arg = _compile_node(node.args[0], variables)
        return lambda X: fn(arg(X))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def compile_expression(text, variables):
    """Compile ``text`` to ``f(X) -> (n,)`` with ``X[:, k]`` bound to ``variables[k]``."""
    try:
        tree = ast.parse(str(text).replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    fn = _compile_node(tree, list(variables))

    def evaluate(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(fn(X), dtype=float)

    evaluate.source = str(text)
    return evaluate


def compile_scalar(text, name="s"):
    """Compile a one-variable expression into ``f(s) -> float or array``."""
    fn = compile_expression(text, [name])

    def evaluate(s):
        s_arr = np.asarray(s, dtype=float)
        out = fn(s_arr.reshape(-1, 1))
        return out.reshape(s_arr.shape) if s_arr.ndim else float(out[0])

    evaluate.source = str(text)
    return evaluate


def default_variables(dim):
    return [f"x{k}" for k in range(dim)]
