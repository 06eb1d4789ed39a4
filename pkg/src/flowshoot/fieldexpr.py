"""Scalar arithmetic expressions over the variables ``t``, ``x1`` and ``x2``.

Used to define custom flow-field components in configuration files::

    >>> e = parse("x1/4 + sin(pi*t/2)")
    >>> e.eval(1.0, 0.0, 0.0)
    1.0

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?          # right-associative
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

so ``-x1^2`` is ``-(x1^2)`` and ``2^3^2`` is ``2^(3^2)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "ExprEvalError",
    "Expr",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse",
    "evaluate",
    "to_source",
    "compile_program",
    "VARIABLES",
    "FUNCTIONS",
]

VARIABLES = ("t", "x1", "x2")
CONSTANTS = {"pi": math.pi}


class ExprError(ValueError):
    """Base class for expression failures."""


class ExprSyntaxError(ExprError):
    """Malformed expression; ``offset`` is the UTF-8 byte offset of the culprit."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.message = message
        self.offset = offset


class ExprEvalError(ExprError, ArithmeticError):
    """Raised when evaluation leaves the real domain (log(0), 1/0, ...)."""


def _sign(z: float) -> float:
    if z > 0.0:
        return 1.0
    if z < 0.0:
        return -1.0
    return 0.0


def _log(z: float) -> float:
    if not z > 0.0:
        raise ExprEvalError(f"log of non-positive value {z!r}")
    return math.log(z)


def _sqrt(z: float) -> float:
    if z < 0.0:
        raise ExprEvalError(f"sqrt of negative value {z!r}")
    return math.sqrt(z)


def _exp(z: float) -> float:
    try:
        return math.exp(z)
    except OverflowError as exc:
        raise ExprEvalError(f"exp overflow at {z!r}") from exc


def _tan(z: float) -> float:
    return math.tan(z)


FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": _tan,
    "exp": _exp,
    "log": _log,
    "sqrt": _sqrt,
    "abs": abs,
    "sign": _sign,
}


# ---------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class Const:
    value: float

    def eval(self, t: float, x1: float, x2: float) -> float:
        return self.value


@dataclass(frozen=True)
class Var:
    name: str

    def eval(self, t: float, x1: float, x2: float) -> float:
        if self.name == "t":
            return t
        if self.name == "x1":
            return x1
        return x2


@dataclass(frozen=True)
class Neg:
    operand: "Expr"

    def eval(self, t: float, x1: float, x2: float) -> float:
        return -self.operand.eval(t, x1, x2)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def eval(self, t: float, x1: float, x2: float) -> float:
        a = self.left.eval(t, x1, x2)
        b = self.right.eval(t, x1, x2)
        op = self.op
        if op == "+":
            r = a + b
        elif op == "-":
            r = a - b
        elif op == "*":
            r = a * b
        elif op == "/":
            if b == 0.0:
                raise ExprEvalError("division by zero")
            r = a / b
        else:
            try:
                r = math.pow(a, b)
            except (ValueError, ZeroDivisionError) as exc:
                raise ExprEvalError(f"{a!r}^{b!r} is not a real number") from exc
            except OverflowError as exc:
                raise ExprEvalError(f"{a!r}^{b!r} overflows") from exc
        if math.isinf(r) and math.isfinite(a) and math.isfinite(b):
            raise ExprEvalError(f"overflow in {a!r} {op} {b!r}")
        return r


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"

    def eval(self, t: float, x1: float, x2: float) -> float:
        z = self.arg.eval(t, x1, x2)
        try:
            return FUNCTIONS[self.func](z)
        except ValueError as exc:
            raise ExprEvalError(f"{self.func}({z!r}) failed: {exc}") from exc


Expr = Union[Const, Var, Neg, BinOp, Call]


def evaluate(e: Expr, t: float, x1: float, x2: float) -> float:
    """Evaluate ``e`` at ``(t, x1, x2)`` in double precision."""
    return e.eval(float(t), float(x1), float(x2))


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, value, pos = self.take()
        if value != text:
            found = "end of input" if kind == "end" else repr(value)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", pos)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and value == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            # exponent binds unary minus: 2^-1 == 0.5
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, value, pos = self.take()
        if kind == "num":
            return Const(float(value))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if value not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {value!r}", pos)
                self.take()
                arg = self.expr()
                if self.peek()[1] == ",":
                    raise ExprSyntaxError(
                        f"{value}() takes exactly one argument", self.peek()[2]
                    )
                self.expect(")")
                return Call(value, arg)
            if value in FUNCTIONS:
                raise ExprSyntaxError(f"function {value!r} requires an argument", pos)
            if value in VARIABLES:
                return Var(value)
            if value in CONSTANTS:
                return Const(CONSTANTS[value])
            raise ExprSyntaxError(f"unknown identifier {value!r}", pos)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos)
        raise ExprSyntaxError(f"unexpected token {value!r}", pos)


def parse(source: str) -> Expr:
    """Parse ``source`` into an immutable expression tree.

    Raises
    ------
    ExprSyntaxError
        On malformed input, unknown identifiers or wrong call arity. The
        exception carries the byte offset of the offending token.
    """
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    try:
        p = _Parser(source)
        node = p.expr()
        kind, value, pos = p.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {value!r}", pos)
    except ExprSyntaxError as exc:
        # tokens carry character positions; report bytes
        raise ExprSyntaxError(exc.message, len(source[: exc.offset].encode("utf-8"))) from None
    return node


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_source(e: Expr) -> str:
    """Render ``e`` as fully parenthesised text that parses back to ``e``."""
    if isinstance(e, Const):
        return repr(e.value) if e.value >= 0 else f"({e.value!r})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)}{e.op}{to_source(e.right)})"
    return f"{e.func}({to_source(e.arg)})"


# ---------------------------------------------------------------------------
# postfix program for the compiled integrator

OP_CONST, OP_T, OP_X1, OP_X2, OP_NEG = 0, 1, 2, 3, 4
OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = 5, 6, 7, 8, 9
OP_FUNC = {
    "sin": 10,
    "cos": 11,
    "tan": 12,
    "exp": 13,
    "log": 14,
    "sqrt": 15,
    "abs": 16,
    "sign": 17,
}
_BIN = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV, "^": OP_POW}
_VAR = {"t": OP_T, "x1": OP_X1, "x2": OP_X2}


def compile_program(e: Expr) -> tuple[np.ndarray, np.ndarray]:
    """Flatten ``e`` into postfix opcodes and constant operands."""
    ops: list[int] = []
    args: list[float] = []

    def emit(node):
        if isinstance(node, Const):
            ops.append(OP_CONST)
            args.append(node.value)
            return
        if isinstance(node, Var):
            ops.append(_VAR[node.name])
        elif isinstance(node, Neg):
            emit(node.operand)
            ops.append(OP_NEG)
        elif isinstance(node, BinOp):
            emit(node.left)
            emit(node.right)
            ops.append(_BIN[node.op])
        else:
            emit(node.arg)
            ops.append(OP_FUNC[node.func])
        args.append(0.0)

    emit(e)
    return np.asarray(ops, dtype=np.int64), np.asarray(args, dtype=np.float64)


def stack_depth(e: Expr) -> int:
    if isinstance(e, (Const, Var)):
        return 1
    if isinstance(e, Neg):
        return stack_depth(e.operand)
    if isinstance(e, Call):
        return stack_depth(e.arg)
    return max(stack_depth(e.left), 1 + stack_depth(e.right))
