"""
Scalar expression language for problem data.

Entries of A(x), b(x), pi_des(x), pi_f(x) and the dynamics f(x, u) are written
as small infix expressions over parameter variables x1..xn and input variables
u1..um, e.g. "1 - x1^2", "2 + abs(x2)" or "min(x1, 0, x2)".

Grammar (see docs/EXPRESSION_GRAMMAR.md):
    precedence  ^  >  unary -  >  * /  >  + -
    functions   abs(e), sqrt(e), min(e1, ..., ek), max(e1, ..., ek)
    exponents   nonnegative integer literals up to MAX_EXPONENT
"""

import math
from dataclasses import dataclass
from typing import FrozenSet, Optional, Sequence, Tuple, Union

from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedInput, VisitError

from .errors import (
    ArityError,
    EvaluationDomainError,
    ExpressionSyntaxError,
    MissingVariableError,
    UnknownIdentifierError,
)

MAX_EXPONENT = 64

GRAMMAR = r"""
    ?start: sum

    ?sum: product
        | sum "+" product       -> add
        | sum "-" product       -> sub

    ?product: unary
        | product "*" unary     -> mul
        | product "/" unary     -> div

    ?unary: power
        | "-" unary             -> neg

    ?power: atom
        | atom "^" NUMBER       -> pow

    ?atom: NUMBER               -> number
        | NAME                  -> var
        | NAME "(" sum ("," sum)* ")"   -> call
        | "(" sum ")"

    NAME: /[A-Za-z_][A-Za-z0-9_]*/

    %import common.NUMBER
    %import common.WS
    %ignore WS
"""

UNARY_FUNCTIONS = ("abs", "sqrt")
NARY_FUNCTIONS = ("min", "max")


class Node:
    """Base class of expression nodes. Nodes are immutable."""

    def evaluate(self, x: Sequence[float], u: Optional[Sequence[float]]) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Num(Node):
    value: float

    def evaluate(self, x, u):
        return self.value


@dataclass(frozen=True)
class Var(Node):
    kind: str   # 'x' or 'u'
    index: int  # 1-based

    @property
    def name(self) -> str:
        return f"{self.kind}{self.index}"

    def evaluate(self, x, u):
        values = x if self.kind == "x" else u
        if values is None or self.index > len(values):
            raise MissingVariableError(f"no value supplied for {self.name}")
        return float(values[self.index - 1])


@dataclass(frozen=True)
class Unary(Node):
    op: str  # 'neg', 'abs' or 'sqrt'
    operand: Node

    def evaluate(self, x, u):
        value = self.operand.evaluate(x, u)
        if self.op == "neg":
            return -value
        if self.op == "abs":
            return abs(value)
        if value < 0.0:
            raise EvaluationDomainError(f"sqrt of negative value {value!r}")
        return math.sqrt(value)


@dataclass(frozen=True)
class Binary(Node):
    op: str  # '+', '-', '*', '/'
    left: Node
    right: Node

    def evaluate(self, x, u):
        a = self.left.evaluate(x, u)
        b = self.right.evaluate(x, u)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if b == 0.0:
            raise EvaluationDomainError("division by zero")
        return a / b


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int

    def evaluate(self, x, u):
        value = self.base.evaluate(x, u)
        result = 1.0
        for _ in range(self.exponent):
            result *= value
        return result


@dataclass(frozen=True)
class Call(Node):
    func: str  # 'min' or 'max'
    args: Tuple[Node, ...]

    def evaluate(self, x, u):
        values = [arg.evaluate(x, u) for arg in self.args]
        return min(values) if self.func == "min" else max(values)


Expression = Union[Num, Var, Unary, Binary, Pow, Call]


def _parse_variable(token, source: str, allow_inputs: bool) -> Var:
    name = str(token)
    kind, digits = name[:1], name[1:]
    if kind in ("x", "u") and digits.isdigit() and int(digits) >= 1:
        if kind == "u" and not allow_inputs:
            raise UnknownIdentifierError(
                f"input variable '{name}' is not allowed here", _byte_offset(source, token.start_pos), source)
        return Var(kind, int(digits))
    raise UnknownIdentifierError(f"unknown identifier '{name}'", _byte_offset(source, token.start_pos), source)


@v_args(inline=True)
class _AstBuilder(Transformer):
    """Turns the lark parse tree into Expression nodes"""

    def __init__(self, source: str, allow_inputs: bool):
        super().__init__()
        self.source = source
        self.allow_inputs = allow_inputs

    def number(self, token):
        value = float(token)
        if not math.isfinite(value):
            raise ExpressionSyntaxError(
                f"numeric literal '{token}' is not finite", _byte_offset(self.source, token.start_pos), self.source)
        return Num(value)

    def var(self, token):
        return _parse_variable(token, self.source, self.allow_inputs)

    def neg(self, operand):
        return Unary("neg", operand)

    def add(self, left, right):
        return Binary("+", left, right)

    def sub(self, left, right):
        return Binary("-", left, right)

    def mul(self, left, right):
        return Binary("*", left, right)

    def div(self, left, right):
        return Binary("/", left, right)

    def pow(self, base, token):
        text = str(token)
        if not text.isdigit():
            raise ExpressionSyntaxError(
                f"exponent must be a nonnegative integer literal, got '{text}'",
                _byte_offset(self.source, token.start_pos), self.source)
        if int(text) > MAX_EXPONENT:
            raise ExpressionSyntaxError(
                f"exponent {text} exceeds the maximum of {MAX_EXPONENT}",
                _byte_offset(self.source, token.start_pos), self.source)
        return Pow(base, int(text))

    def call(self, token, *args):
        name = str(token)
        offset = _byte_offset(self.source, token.start_pos)
        if name in UNARY_FUNCTIONS:
            if len(args) != 1:
                raise ArityError(f"{name}() takes exactly 1 argument, got {len(args)}", offset, self.source)
            return Unary(name, args[0])
        if name in NARY_FUNCTIONS:
            return Call(name, tuple(args))
        raise UnknownIdentifierError(f"unknown function '{name}'", offset, self.source)


_parser = Lark(GRAMMAR, parser="lalr", maybe_placeholders=False)


def _byte_offset(source: str, char_pos: int) -> int:
    return len(source[:char_pos].encode("utf-8"))


def parse(source: str, allow_inputs: bool = True) -> Expression:
    """
    Parse an expression string into an AST.

    Args:
        source: expression text, e.g. "1 - x1^2"
        allow_inputs: accept u-variables (only dynamics expressions need them)

    Returns:
        Expression: the root node

    Raises:
        ExpressionSyntaxError, UnknownIdentifierError, ArityError
    """
    if not source or not source.strip():
        raise ExpressionSyntaxError("empty expression", 0, source or "")
    try:
        tree = _parser.parse(source)
    except UnexpectedInput as err:
        token = getattr(err, "token", None)
        pos = getattr(token, "start_pos", None)
        if pos is None:
            pos = getattr(err, "pos_in_stream", None)
        if pos is None or pos < 0:
            pos = len(source)
        raise ExpressionSyntaxError("syntax error", _byte_offset(source, pos), source) from None
    try:
        return _AstBuilder(source, allow_inputs).transform(tree)
    except VisitError as err:
        raise err.orig_exc from None


def evaluate(expr: Expression, x: Sequence[float], u: Optional[Sequence[float]] = None) -> float:
    """Evaluate expr in IEEE double precision at parameter x (and input u)."""
    return expr.evaluate(x, u)


def free_vars(expr: Expression) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """Return the 1-based indices of the x- and u-variables referenced by expr."""
    params, inputs = set(), set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            (params if node.kind == "x" else inputs).add(node.index)
        elif isinstance(node, Unary):
            stack.append(node.operand)
        elif isinstance(node, Binary):
            stack.extend((node.left, node.right))
        elif isinstance(node, Pow):
            stack.append(node.base)
        elif isinstance(node, Call):
            stack.extend(node.args)
    return frozenset(params), frozenset(inputs)


def pretty(expr: Expression) -> str:
    """Fully parenthesised text form; parse(pretty(e)) == e for parsed ASTs."""
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Unary):
        if expr.op == "neg":
            return f"-({pretty(expr.operand)})"
        return f"{expr.op}({pretty(expr.operand)})"
    if isinstance(expr, Binary):
        return f"({pretty(expr.left)} {expr.op} {pretty(expr.right)})"
    if isinstance(expr, Pow):
        return f"({pretty(expr.base)})^{expr.exponent}"
    if isinstance(expr, Call):
        return f"{expr.func}({', '.join(pretty(arg) for arg in expr.args)})"
    raise TypeError(f"not an expression node: {expr!r}")


def constant(value: float) -> Num:
    return Num(float(value))
