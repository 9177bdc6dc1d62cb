"""Small arithmetic expression language for forcing terms.

Grammar (lowest to highest precedence)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right associative
    atom   := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

Names are ``x1``, ``x2`` and the constant ``pi``; functions are ``sin``,
``cos``, ``exp`` and ``sqrt``.  Evaluation is vectorized over numpy arrays.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ExprEvalError, ExprSyntaxError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
VARIABLES = ("x1", "x2")
CONSTANTS = {"pi": math.pi}

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


@dataclass(frozen=True)
class Num:
    value: float

    def __str__(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    arg: object

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call:
    func: str
    arg: object

    def __str__(self):
        return f"{self.func}({self.arg})"


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text):
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("end", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def fail(self, expected):
        t = self.tok
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExprSyntaxError(f"expected {expected}, found {found}", t.line, t.col, expected)

    def accept(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            self.fail("operator or end of input")
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.accept("^"):
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if t.kind == "name":
            self.i += 1
            if t.text in FUNCTIONS:
                if not self.accept("("):
                    self.fail("'(' after function name")
                arg = self.expr()
                if not self.accept(")"):
                    self.fail("')'")
                return Call(t.text, arg)
            if t.text in VARIABLES or t.text in CONSTANTS:
                return Var(t.text)
            raise ExprSyntaxError(f"unknown name {t.text!r}", t.line, t.col, "x1, x2, pi or a function")
        if self.accept("("):
            node = self.expr()
            if not self.accept(")"):
                self.fail("')'")
            return node
        self.fail("number, name or '('")


def parse_expr(text):
    """Parse ``text`` into an expression tree; raises :class:`ExprSyntaxError`."""
    return _Parser(str(text)).parse()


def evaluate(node, x1, x2):
    """Evaluate ``node`` at points ``(x1, x2)`` (scalars or arrays)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(node, {"x1": x1, "x2": x2, **CONSTANTS})
    out = np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x1, x2).shape)
    if not np.all(np.isfinite(out)):
        raise ExprEvalError(f"expression {node} is not finite at some evaluation point")
    return out.copy() if out.ndim else float(out)


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Call):
        arg = _eval(node.arg, env)
        if node.func == "sqrt" and np.any(np.asarray(arg) < 0):
            raise ExprEvalError(f"sqrt of a negative value in {node}")
        return FUNCTIONS[node.func](arg)
    a, b = _eval(node.left, env), _eval(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if np.any(np.asarray(b) == 0):
            raise ExprEvalError(f"division by zero in {node}")
        return a / b
    return np.power(a, b)


def forcing_function(pair):
    """Turn two expressions (strings or trees) into ``f(x) -> (n, 2)``."""
    if len(pair) != 2:
        raise ValueError("a forcing needs exactly two components")
    trees = [parse_expr(p) if isinstance(p, str) else p for p in pair]

    def f(x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        return np.column_stack([np.broadcast_to(evaluate(t, x[:, 0], x[:, 1]), (len(x),))
                                for t in trees])

    f.exprs = tuple(str(t) for t in trees)
    return f
