"""Arithmetic expressions for Dirichlet boundary data.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ('-')? power
    power  := atom ('^' atom)?
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

Variables are ``x1`` .. ``x9`` and ``xn`` (the last coordinate). Functions are
``sin``, ``cos``, ``exp``, ``abs``, ``min`` and ``max``. Evaluation is
vectorised over an ``(m, n)`` array of points.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifier",
    "ExprEvalError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "BoundaryExpr",
    "parse_expr",
]


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class ExprEvalError(ExprError):
    pass


_FUNCS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "abs": (1, np.abs),
    "min": (2, None),
    "max": (2, None),
}

_VAR_RE = re.compile(r"x([1-9]|n)\Z")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # "x1".."x9" or "xn"


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


Node = Union[Num, Var, Neg, BinOp, Call]


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.peek()
        if text != value or kind != "op":
            found = "end of input" if kind == "eof" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected {text!r}", pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.power())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", base, self.atom())
        return base

    def atom(self) -> Node:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if self.peek()[:2] == ("op", "("):
                if text not in _FUNCS:
                    raise UnknownIdentifier(text, pos)
                self.advance()
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                arity = _FUNCS[text][0]
                if len(args) != arity:
                    raise ExprSyntaxError(
                        f"{text} takes {arity} argument(s), got {len(args)}", pos
                    )
                return Call(text, tuple(args))
            if _VAR_RE.match(text):
                return Var(text)
            raise UnknownIdentifier(text, pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "eof" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos)


def _to_string(node: Node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"-({_to_string(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_to_string(node.left)}) {node.op} ({_to_string(node.right)})"
    return f"{node.func}({', '.join(_to_string(a) for a in node.args)})"


def _eval(node: Node, cols: list[np.ndarray]):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        k = len(cols) if node.name == "xn" else int(node.name[1:])
        if k > len(cols):
            raise ExprEvalError(f"{node.name} used with {len(cols)}-dimensional points")
        return cols[k - 1]
    if isinstance(node, Neg):
        return -_eval(node.operand, cols)
    if isinstance(node, BinOp):
        a = _eval(node.left, cols)
        b = _eval(node.right, cols)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExprEvalError("division by zero")
            return a / b
        with np.errstate(invalid="ignore"):
            return np.power(np.asarray(a, dtype=float), b)
    args = [_eval(a, cols) for a in node.args]
    if node.func == "min":
        return np.minimum(*args)
    if node.func == "max":
        return np.maximum(*args)
    return _FUNCS[node.func][1](args[0])


@dataclass(frozen=True)
class BoundaryExpr:
    """A parsed expression; call it on points to evaluate."""

    root: Node
    text: str = ""

    def __call__(self, points) -> np.ndarray | float:
        """Evaluate at a single point ``(n,)`` or a batch ``(m, n)``."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        cols = [pts[:, j] for j in range(pts.shape[1])]
        out = np.broadcast_to(np.asarray(_eval(self.root, cols), dtype=float), (pts.shape[0],))
        if not np.all(np.isfinite(out)):
            raise ExprEvalError(f"non-finite value from {self.text or str(self)!r}")
        return float(out[0]) if single else np.array(out)

    def __str__(self) -> str:
        return _to_string(self.root)


def parse_expr(text: str) -> BoundaryExpr:
    """Parse ``text`` into a :class:`BoundaryExpr`.

    Raises
    ------
    ExprSyntaxError
        Malformed input; ``offset`` is the character position of the
        offending token (``len(text)`` for premature end of input).
    UnknownIdentifier
        A name that is neither a coordinate nor a supported function.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return BoundaryExpr(_Parser(text).parse(), text)
