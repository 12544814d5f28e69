"""Parser and evaluator for user-declared density and value expressions.

Grammar (recursive descent, precedence low to high):

    expr   := term  (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          right-associative, exponent may be signed
    atom   := NUMBER | 'x' | 'y' | '(' expr ')'

so '^' binds tighter than unary minus, which binds tighter than '*' and '/'.
Only the variables x and y are recognized. Positions in error messages are
zero-based character offsets into the source string.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np


class ExpressionError(ValueError):
    """Syntax or evaluation failure for a declared expression."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)
        self.position = position


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "ExpressionAst"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "ExpressionAst"
    right: "ExpressionAst"


ExpressionAst = Union[Num, Var, Neg, BinOp]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)
_ALLOWED_VARS = ("x", "y")


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            at = len(source) - len(stripped)
            raise ExpressionError(f"unexpected character {stripped[0]!r}", at)
        for kind in ("num", "name", "op"):
            if m.group(kind) is not None:
                tokens.append((kind, m.group(kind), m.start(kind)))
                break
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.idx = 0

    def peek(self):
        return self.tokens[self.idx]

    def advance(self):
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def fail(self, message: str):
        kind, text, pos = self.peek()
        raise ExpressionError(message, pos)

    def expr(self) -> ExpressionAst:
        node = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> ExpressionAst:
        node = self.unary()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> ExpressionAst:
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> ExpressionAst:
        node = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", node, self.unary())
        return node

    def atom(self) -> ExpressionAst:
        kind, text, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "name":
            self.advance()
            if text not in _ALLOWED_VARS:
                raise ExpressionError(f"unknown identifier {text!r}", pos)
            return Var(text)
        if (kind, text) == ("op", "("):
            self.advance()
            node = self.expr()
            if self.peek()[:2] != ("op", ")"):
                self.fail("expected ')'")
            self.advance()
            return node
        self.fail("expected a number, variable, or '('")


def parse_density(source: str) -> ExpressionAst:
    """Parse a density or value expression in the variables x and y."""
    if not source or not source.strip():
        raise ExpressionError("empty expression")
    parser = _Parser(source)
    node = parser.expr()
    kind, text, pos = parser.peek()
    if kind != "end":
        raise ExpressionError(f"unparsed trailing input {text!r}", pos)
    return node


def evaluate(node: ExpressionAst, x=None, y=None):
    """Evaluate an expression; x and y may be scalars or numpy arrays."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        val = x if node.name == "x" else y
        if val is None:
            raise ExpressionError(f"no value supplied for variable {node.name!r}")
        return val
    if isinstance(node, Neg):
        return -evaluate(node.operand, x, y)
    left = evaluate(node.left, x, y)
    right = evaluate(node.right, x, y)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        try:
            with np.errstate(divide="raise", invalid="raise"):
                return left / right
        except (ZeroDivisionError, FloatingPointError):
            raise ExpressionError("division by zero") from None
    if node.op == "^":
        try:
            with np.errstate(all="ignore"):
                out = np.asarray(left) ** np.asarray(right)
        except ZeroDivisionError:
            raise ExpressionError("power produced a non-finite value") from None
        if np.iscomplexobj(out) or np.any(~np.isfinite(out)):
            raise ExpressionError("power produced a non-finite or complex value")
        return float(out) if out.ndim == 0 else out
    raise ExpressionError(f"unknown operator {node.op!r}")


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(node: ExpressionAst) -> int:
    if isinstance(node, BinOp):
        return _PRECEDENCE[node.op]
    if isinstance(node, Neg):
        return _PRECEDENCE["neg"]
    return 9


def to_source(node: ExpressionAst) -> str:
    """Render an AST back to source; reparsing yields an identical AST."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        if _prec(node.operand) < _PRECEDENCE["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PRECEDENCE[node.op]
    left = to_source(node.left)
    right = to_source(node.right)
    # parenthesize against equal precedence on the non-associating side
    if _prec(node.left) < p or (_prec(node.left) == p and node.op == "^"):
        left = f"({left})"
    if _prec(node.right) < p or (_prec(node.right) == p and node.op != "^"):
        right = f"({right})"
    return f"{left}{node.op}{right}"
