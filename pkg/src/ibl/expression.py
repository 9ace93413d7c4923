"""The built-in predictive-expression dialect.

A program is a short sequence of `name = expression` bindings followed by one
final expression producing the probability that the target is 1. The grammar
spans exactly the shapes observed in working generated models: feature
references, constants, arithmetic, abs/exp/min/max, sigmoid, clamp, and
conditionals on comparisons. See docs/expression_dialect.md for the EBNF.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Mapping, Union

FUNCTIONS = ("abs", "exp", "min", "max", "sigmoid", "clamp")
COMPARE_OPS = ("<", "<=", ">", ">=", "==")
DIV_GUARD_TAGGED_NAN = "tagged-nan"  # zero denominator yields NaN plus a division flag


class ExpressionError(ValueError):
    """Source is not a valid expression-dialect program."""


class UnknownFeatureError(ExpressionError):
    pass


Expr = Union["Const", "Feature", "Neg", "BinOp", "Call", "IfElse"]


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Feature:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    div_guard: str | None = None  # recorded on division nodes only


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class IfElse:
    condition: Compare
    then: "Expr"
    otherwise: "Expr"


@dataclass(frozen=True)
class ExprProgram:
    """Let-bindings evaluated in order, then the result expression."""

    bindings: tuple[tuple[str, Expr], ...]
    result: Expr
    feature_names: tuple[str, ...]


_BIN_OPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}
_CMP_OPS = {ast.Lt: "<", ast.LtE: "<=", ast.Gt: ">", ast.GtE: ">=", ast.Eq: "=="}


def parse_expression_model(source: str, feature_names: list[str] | tuple[str, ...]) -> ExprProgram:
    """Parse dialect source against a declared feature-name set.

    Raises :class:`ExpressionError` for syntax outside the dialect and
    :class:`UnknownFeatureError` for references to undeclared features.
    """
    features = tuple(feature_names)
    try:
        tree = ast.parse(source, mode="exec")
    except SyntaxError as exc:
        raise ExpressionError(f"syntax error: {exc}") from exc
    if not tree.body:
        raise ExpressionError("empty program")

    scope = set(features)
    bound: set[str] = set()
    bindings: list[tuple[str, Expr]] = []
    *prefix, last = tree.body
    for stmt in prefix:
        if not isinstance(stmt, ast.Assign) or len(stmt.targets) != 1 or not isinstance(stmt.targets[0], ast.Name):
            raise ExpressionError("only `name = expression` bindings may precede the final expression")
        name = stmt.targets[0].id
        if name in FUNCTIONS:
            raise ExpressionError(f"cannot bind reserved function name {name!r}")
        if name in features:
            raise ExpressionError(f"cannot rebind feature name {name!r}")
        bindings.append((name, _convert(stmt.value, scope | bound)))
        bound.add(name)
    if not isinstance(last, ast.Expr):
        raise ExpressionError("program must end with a bare result expression")
    result = _convert(last.value, scope | bound)
    return ExprProgram(tuple(bindings), result, features)


def _convert(node: ast.expr, names: set[str]) -> Expr:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"constant {node.value!r} is not a number")
        return Const(float(node.value))
    if isinstance(node, ast.Name):
        if node.id in FUNCTIONS:
            raise ExpressionError(f"function {node.id!r} used without a call")
        if node.id not in names:
            raise UnknownFeatureError(f"unknown feature {node.id!r}")
        return Feature(node.id)
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.USub):
            return Neg(_convert(node.operand, names))
        if isinstance(node.op, ast.UAdd):
            return _convert(node.operand, names)
        raise ExpressionError("unsupported unary operator")
    if isinstance(node, ast.BinOp):
        op = _BIN_OPS.get(type(node.op))
        if op is None:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        guard = DIV_GUARD_TAGGED_NAN if op == "/" else None
        return BinOp(op, _convert(node.left, names), _convert(node.right, names), guard)
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError("only abs/exp/min/max/sigmoid/clamp calls are allowed")
        if node.keywords:
            raise ExpressionError("keyword arguments are not part of the dialect")
        fn = node.func.id
        args = tuple(_convert(a, names) for a in node.args)
        if fn in ("abs", "exp", "sigmoid", "clamp") and len(args) != 1:
            raise ExpressionError(f"{fn} takes exactly one argument")
        if fn in ("min", "max") and len(args) < 2:
            raise ExpressionError(f"{fn} takes at least two arguments")
        return Call(fn, args)
    if isinstance(node, ast.Compare):
        if len(node.ops) != 1 or len(node.comparators) != 1:
            raise ExpressionError("chained comparisons are not part of the dialect")
        op = _CMP_OPS.get(type(node.ops[0]))
        if op is None:
            raise ExpressionError(f"unsupported comparison {type(node.ops[0]).__name__}")
        return Compare(op, _convert(node.left, names), _convert(node.comparators[0], names))
    if isinstance(node, ast.IfExp):
        condition = _convert(node.test, names)
        if not isinstance(condition, Compare):
            raise ExpressionError("conditionals must test a comparison")
        return IfElse(condition, _convert(node.body, names), _convert(node.orelse, names))
    raise ExpressionError(f"unsupported syntax: {type(node).__name__}")


def _sigmoid(t: float) -> float:
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def _exp(t: float) -> float:
    try:
        return math.exp(t)
    except OverflowError:
        return math.inf


def _clamp(v: float) -> float:
    if math.isnan(v):
        return v
    return min(1.0, max(0.0, v))


def _extreme(fn: str, values: tuple[float, ...]) -> float:
    # NaN propagates instead of depending on argument order
    if any(math.isnan(v) for v in values):
        return math.nan
    return min(values) if fn == "min" else max(values)


class _EvalState:
    __slots__ = ("division_by_zero",)

    def __init__(self) -> None:
        self.division_by_zero = False


def eval_expression(prog: ExprProgram, row: Mapping[str, float]) -> float:
    """Value of the program on one row; division by zero yields NaN."""
    value, _ = eval_expression_tagged(prog, row)
    return value


def eval_expression_tagged(prog: ExprProgram, row: Mapping[str, float]) -> tuple[float, bool]:
    """Like :func:`eval_expression` but also reports whether a division by
    zero occurred, so callers can tell tagged NaN from other non-finite
    results."""
    state = _EvalState()
    env: dict[str, float] = {}
    for name, expr in prog.bindings:
        env[name] = _eval(expr, row, env, state)
    value = _eval(prog.result, row, env, state)
    return value, state.division_by_zero


def _eval(expr: Expr, row: Mapping[str, float], env: Mapping[str, float], state: _EvalState) -> float:
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Feature):
        if expr.name in env:
            return env[expr.name]
        try:
            return float(row[expr.name])
        except KeyError:
            raise ValueError(f"row is missing feature {expr.name!r}") from None
    if isinstance(expr, Neg):
        return -_eval(expr.operand, row, env, state)
    if isinstance(expr, BinOp):
        left = _eval(expr.left, row, env, state)
        right = _eval(expr.right, row, env, state)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if right == 0.0:
            state.division_by_zero = True
            return math.nan
        return left / right
    if isinstance(expr, Call):
        args = tuple(_eval(a, row, env, state) for a in expr.args)
        if expr.fn == "abs":
            return abs(args[0])
        if expr.fn == "exp":
            return _exp(args[0])
        if expr.fn == "sigmoid":
            return _sigmoid(args[0])
        if expr.fn == "clamp":
            return _clamp(args[0])
        return _extreme(expr.fn, args)
    if isinstance(expr, Compare):
        # comparisons only appear as conditional tests; 1/0 keeps _eval total
        return 1.0 if _compare(expr, row, env, state) else 0.0
    if isinstance(expr, IfElse):
        if _compare(expr.condition, row, env, state):
            return _eval(expr.then, row, env, state)
        return _eval(expr.otherwise, row, env, state)
    raise TypeError(f"not an expression node: {expr!r}")


def _compare(cmp: Compare, row: Mapping[str, float], env: Mapping[str, float], state: _EvalState) -> bool:
    left = _eval(cmp.left, row, env, state)
    right = _eval(cmp.right, row, env, state)
    if cmp.op == "<":
        return left < right
    if cmp.op == "<=":
        return left <= right
    if cmp.op == ">":
        return left > right
    if cmp.op == ">=":
        return left >= right
    return left == right
