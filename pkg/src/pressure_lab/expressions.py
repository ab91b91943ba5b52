"""Arithmetic expressions for user-supplied potential parts.

A small language in one variable: numbers, x, the operators + - * / ^,
parentheses, and the functions log, abs, exp, sin, cos.  Parsing is
recursive descent with the precedence chain ^ above unary minus above
* and / above + and -, and ^ associating to the right.  Printing
inserts only the parentheses the precedence table requires, so a
parsed tree survives a print/parse round trip unchanged, and compiled
expressions evaluate on numpy arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import EvaluationError, ParseError, ValidationError

FUNCTIONS = ("abs", "cos", "exp", "log", "sin")

Expression = Union["Const", "Var", "Neg", "BinOp", "Call"]


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    arg: Expression


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Call:
    func: str
    arg: Expression


# ----------------------------------------------------------------------
# tokenizer

_NUMBER_RE = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_OPS = set("+-*/^()")

_ATOM_EXPECTED = frozenset({"number", "'x'", "function", "'('", "'-'"})


@dataclass(frozen=True)
class _Token:
    kind: str  # number | name | op | end
    text: str
    offset: int


def _tokenize(src: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or c == ".":
            m = _NUMBER_RE.match(src, i)
            if m is None:
                raise ParseError(
                    f"malformed number at offset {i}", i, ("number",)
                )
            tokens.append(_Token("number", m.group(), i))
            i = m.end()
            continue
        if c.isalpha() or c == "_":
            m = _NAME_RE.match(src, i)
            tokens.append(_Token("name", m.group(), i))
            i = m.end()
            continue
        if c in _OPS:
            tokens.append(_Token("op", c, i))
            i += 1
            continue
        raise ParseError(
            f"unexpected character {c!r} at offset {i}",
            i,
            ("number", "'x'", "function", "operator"),
        )
    tokens.append(_Token("end", "", n))
    return tokens


# ----------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected) -> ParseError:
        tok = self.peek()
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        wanted = ", ".join(sorted(expected))
        return ParseError(
            f"unexpected {what} at offset {tok.offset}; expected one of: {wanted}",
            tok.offset,
            expected,
        )

    def expect_op(self, op: str) -> None:
        tok = self.peek()
        if tok.kind == "op" and tok.text == op:
            self.advance()
            return
        raise self.fail((f"'{op}'",))

    def parse_expr(self) -> Expression:
        node = self.parse_term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self) -> Expression:
        node = self.parse_unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> Expression:
        if self.peek().kind == "op" and self.peek().text == "-":
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> Expression:
        base = self.parse_atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            return BinOp("^", base, self.parse_exponent())
        return base

    def parse_exponent(self) -> Expression:
        # right-associative, and a sign is allowed directly after ^
        if self.peek().kind == "op" and self.peek().text == "-":
            self.advance()
            return Neg(self.parse_exponent())
        return self.parse_power()

    def parse_atom(self) -> Expression:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            value = float(tok.text)
            if not math.isfinite(value):
                raise ParseError(
                    f"number out of range at offset {tok.offset}",
                    tok.offset,
                    ("number",),
                )
            return Const(value)
        if tok.kind == "name":
            self.advance()
            if tok.text == "x":
                return Var()
            if tok.text in FUNCTIONS:
                self.expect_op("(")
                arg = self.parse_expr()
                self.expect_op(")")
                return Call(tok.text, arg)
            raise ParseError(
                f"unknown name {tok.text!r} at offset {tok.offset}",
                tok.offset,
                ("'x'", "function"),
            )
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise self.fail(_ATOM_EXPECTED)


def parse_expression(src: str) -> Expression:
    """Parse a source string into an expression tree."""
    if not isinstance(src, str) or not src.strip():
        raise ParseError("empty expression", 0, _ATOM_EXPECTED)
    parser = _Parser(_tokenize(src))
    node = parser.parse_expr()
    if parser.peek().kind != "end":
        raise parser.fail(("operator", "end of input"))
    return node


# ----------------------------------------------------------------------
# printer

_ADD, _MUL, _NEG, _POW, _ATOM = 1, 2, 3, 4, 5


def _prec(node: Expression) -> int:
    if isinstance(node, (Const, Var, Call)):
        return _ATOM
    if isinstance(node, Neg):
        return _NEG
    if node.op in "+-":
        return _ADD
    if node.op in "*/":
        return _MUL
    return _POW


def _wrap(node: Expression, floor: int) -> str:
    s = to_source(node)
    return f"({s})" if _prec(node) < floor else s


def to_source(node: Expression) -> str:
    """Print a tree with the fewest parentheses that preserve it.

    Parser-produced trees round trip exactly; a hand-built negative
    constant prints in unary-minus form and reparses as that form.
    """
    if isinstance(node, Const):
        v = node.value
        if not math.isfinite(v):
            raise ValidationError("only finite constants can be printed")
        return "-" + repr(-v) if math.copysign(1.0, v) < 0 else repr(v)
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Neg):
        return "-" + _wrap(node.arg, _NEG)
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, BinOp):
        if node.op in "+-":
            return _wrap(node.left, _ADD) + node.op + _wrap(node.right, _MUL)
        if node.op in "*/":
            return _wrap(node.left, _MUL) + node.op + _wrap(node.right, _NEG)
        # power: tightest binding on the left, sign allowed on the right
        return _wrap(node.left, _ATOM) + "^" + _wrap(node.right, _NEG)
    raise ValidationError(f"not an expression node: {node!r}")


# ----------------------------------------------------------------------
# evaluation

def _eval(node: Expression, xs: np.ndarray) -> np.ndarray:
    if isinstance(node, Const):
        return np.full(xs.shape, node.value)
    if isinstance(node, Var):
        return xs
    if isinstance(node, Neg):
        return -_eval(node.arg, xs)
    if isinstance(node, Call):
        arg = _eval(node.arg, xs)
        if node.func == "log":
            if not np.all(arg > 0):
                raise EvaluationError("log of nonpositive value")
            return np.log(arg)
        with np.errstate(over="ignore", invalid="ignore"):
            return getattr(np, node.func)(arg)
    left = _eval(node.left, xs)
    right = _eval(node.right, xs)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        if np.any(right == 0.0):
            raise EvaluationError("division by zero")
        return left / right
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        out = left**right
    bad = ~np.isfinite(out) & np.isfinite(left) & np.isfinite(right)
    if np.any(bad):
        raise EvaluationError("power overflows or leaves the real domain")
    return out


def compile_expression(node: Expression) -> Callable:
    """Vectorized evaluator; scalar in, float out; array in, array out."""

    def fn(x):
        xs = np.asarray(x, dtype=float)
        out = np.broadcast_to(_eval(node, xs), xs.shape)
        if np.ndim(x) == 0:
            return float(out)
        return np.array(out, dtype=float)

    return fn


def evaluate(node: Expression, x) -> float:
    return compile_expression(node)(x)
