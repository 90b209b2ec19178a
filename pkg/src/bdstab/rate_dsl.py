"""A small arithmetic language for user-defined rate functions.

Grammar (standard precedence, left associative)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := number | ident | func '(' args ')' | '(' expr ')' | '-' factor

Identifiers are the coordinates ``x1 .. xd`` and ``norm`` (the Euclidean
norm of the state).  Functions: ``log exp sqrt`` (one argument) and
``pow min max`` (two arguments).

>>> e = parse("x1/norm")
>>> evaluate(e, (3.0, 4.0))
0.6
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

from .errors import EvalError, ParseError

MAX_TEXT = 64 * 1024

FUNCTIONS = {"log": 1, "exp": 1, "sqrt": 1, "pow": 2, "min": 2, "max": 2}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Norm:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Node = Union[Num, Var, Norm, Neg, BinOp, Call]


# -- lexer -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/(),])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            for i, ch in enumerate(m.group(), start=pos):
                if ch == "\n":
                    line += 1
                    line_start = i + 1
        else:
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


# -- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, dimension: int | None):
        self.toks = _tokenize(text)
        self.i = 0
        self.dimension = dimension

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def expect(self, text):
        if self.tok.text != text:
            found = "end of input" if self.tok.kind == "eof" else repr(self.tok.text)
            raise self.error(f"expected {text!r}, found {found}")
        self.i += 1

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "eof":
            if self.tok.text == ")":
                raise self.error("unbalanced parenthesis")
            raise self.error(f"unexpected token {self.tok.text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.text in ("*", "/"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.text == "-":
            self.i += 1
            return Neg(self.factor())
        if tok.text == "(":
            self.i += 1
            node = self.expr()
            if self.tok.text != ")":
                raise self.error("unbalanced parenthesis: expected ')'")
            self.i += 1
            return node
        if tok.kind == "ident":
            self.i += 1
            name = tok.text
            if name in FUNCTIONS:
                return self.call(name, tok)
            if name == "norm":
                return Norm()
            m = re.fullmatch(r"x([1-9]\d*)", name)
            if m:
                idx = int(m.group(1))
                if self.dimension is not None and idx > self.dimension:
                    raise self.error(f"variable {name} exceeds dimension {self.dimension}", tok)
                return Var(idx)
            raise self.error(f"unknown identifier {name!r}", tok)
        if tok.kind == "eof":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected token {tok.text!r}")

    def call(self, name, tok) -> Node:
        self.expect("(")
        args = [self.expr()]
        while self.tok.text == ",":
            self.i += 1
            args.append(self.expr())
        if self.tok.text != ")":
            raise self.error("unbalanced parenthesis: expected ')'")
        self.i += 1
        if len(args) != FUNCTIONS[name]:
            raise self.error(
                f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", tok
            )
        return Call(name, tuple(args))


# -- printer ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_text(node: Node) -> str:
    """Render ``node`` as source text that parses back to the same tree."""
    return _show(node, 0)


def _show(node, ctx):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Norm):
        return "norm"
    if isinstance(node, Neg):
        return "-" + _show(node.operand, 3)
    if isinstance(node, Call):
        return f"{node.func}({', '.join(_show(a, 0) for a in node.args)})"
    p = _PREC[node.op]
    # right operand binds one level tighter to keep left associativity
    s = f"{_show(node.left, p)} {node.op} {_show(node.right, p + 1)}"
    return f"({s})" if p < ctx else s


# -- evaluation ------------------------------------------------------------


def _compile(node) -> Callable[[Sequence[float], float], float]:
    if isinstance(node, Num):
        v = node.value
        return lambda x, n: v
    if isinstance(node, Var):
        i = node.index - 1
        return lambda x, n: x[i]
    if isinstance(node, Norm):
        return lambda x, n: n
    if isinstance(node, Neg):
        f = _compile(node.operand)
        return lambda x, n: -f(x, n)
    if isinstance(node, BinOp):
        f, g = _compile(node.left), _compile(node.right)
        if node.op == "+":
            return lambda x, n: f(x, n) + g(x, n)
        if node.op == "-":
            return lambda x, n: f(x, n) - g(x, n)
        if node.op == "*":
            return lambda x, n: f(x, n) * g(x, n)

        def div(x, n):
            d = g(x, n)
            if d == 0.0:
                raise EvalError("division by zero", to_text(node))
            return f(x, n) / d

        return div
    fs = [_compile(a) for a in node.args]
    name = node.func
    if name == "log":
        f = fs[0]

        def log(x, n):
            a = f(x, n)
            if not a > 0.0:
                raise EvalError(f"log of non-positive value {a!r}", to_text(node))
            return math.log(a)

        return log
    if name == "sqrt":
        f = fs[0]

        def sqrt(x, n):
            a = f(x, n)
            if a < 0.0:
                raise EvalError(f"sqrt of negative value {a!r}", to_text(node))
            return math.sqrt(a)

        return sqrt
    if name == "exp":
        f = fs[0]

        def exp(x, n):
            try:
                return math.exp(f(x, n))
            except OverflowError:
                raise EvalError("exp overflow", to_text(node)) from None

        return exp
    if name == "pow":
        f, g = fs

        def pow_(x, n):
            try:
                return math.pow(f(x, n), g(x, n))
            except (ValueError, OverflowError, ZeroDivisionError) as exc:
                raise EvalError(f"pow domain error ({exc})", to_text(node)) from None

        return pow_
    f, g = fs
    if name == "min":
        return lambda x, n: min(f(x, n), g(x, n))
    return lambda x, n: max(f(x, n), g(x, n))


class RateExpr:
    """A parsed, immutable rate expression."""

    __slots__ = ("root", "text", "_fn")

    def __init__(self, root: Node, text: str | None = None):
        self.root = root
        self.text = text if text is not None else to_text(root)
        self._fn = _compile(root)

    @property
    def max_index(self) -> int:
        return _max_index(self.root)

    def __call__(self, x: Sequence[float]) -> float:
        return evaluate(self, x)

    def __eq__(self, other):
        return isinstance(other, RateExpr) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def __repr__(self):
        return f"RateExpr({self.text!r})"


def _max_index(node) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Neg):
        return _max_index(node.operand)
    if isinstance(node, BinOp):
        return max(_max_index(node.left), _max_index(node.right))
    if isinstance(node, Call):
        return max(_max_index(a) for a in node.args)
    return 0


def parse(text: str, dimension: int | None = None) -> RateExpr:
    """Parse ``text``; raises :class:`ParseError` carrying line/column."""
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression", 1, 1)
    if len(text.encode("utf-8")) > MAX_TEXT:
        raise ParseError("expression exceeds 64 KiB", 1, 1)
    return RateExpr(_Parser(text, dimension).parse(), text)


def evaluate(expr: RateExpr, x: Sequence[float]) -> float:
    """Evaluate at state ``x`` (must be non-zero) in IEEE double precision."""
    if expr.max_index > len(x):
        raise EvalError(f"expression uses x{expr.max_index} but state has dimension {len(x)}")
    norm = math.sqrt(math.fsum(float(v) * float(v) for v in x))
    if norm == 0.0:
        raise EvalError("rate expressions are undefined at the origin")
    return float(expr._fn(x, norm))
