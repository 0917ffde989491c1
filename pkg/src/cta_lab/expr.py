"""Small recursive-descent parser for coefficient formulas.

Formulas in experiment configs (potentials, metric perturbations, conformal
factors) are written in a deliberately tiny language::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are the coordinates ``x1, y1, y2``, the constants ``pi`` and ``e``,
and the functions ``sin, cos, exp, tanh``. Parsing produces a tree of
closures that evaluates vectorised over numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

VARIABLES = ("x1", "y1", "y2")
CONSTANTS = {"pi": np.pi, "e": np.e}
FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
}

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")


class ExpressionError(ValueError):
    """Raised on malformed formulas; carries the character offset."""

    def __init__(self, message: str, position: int, source: str):
        super().__init__(f"{message} at column {position + 1} in {source!r}")
        self.position = position
        self.source = source


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionError(f"unexpected character {text[start]!r}", start, text)
        if m.group(1) is not None:
            tokens.append(("num", m.group(1), m.start(1)))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2), m.start(2)))
        else:
            op = "^" if m.group(3) == "**" else m.group(3)
            tokens.append(("op", op, m.start(3)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            raise ExpressionError(f"expected {value!r}, found {val or 'end of input'!r}", pos, self.text)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {val!r}", pos, self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = _binary(op, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            node = _binary(op, node, rhs)
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in ("+", "-"):
            self.take()
            inner = self.unary()
            return inner if val == "+" else (lambda env, f=inner: -f(env))
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            exponent = self.unary()
            return _binary("^", base, exponent)
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            c = float(val)
            return lambda env, c=c: c
        if kind == "name":
            if self.peek()[1] == "(":
                if val not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {val!r}", pos, self.text)
                self.take()
                arg = self.expr()
                self.expect(")")
                fn = FUNCTIONS[val]
                return lambda env, fn=fn, arg=arg: fn(arg(env))
            if val in CONSTANTS:
                c = CONSTANTS[val]
                return lambda env, c=c: c
            if val in VARIABLES:
                return lambda env, name=val: env[name]
            raise ExpressionError(f"unknown name {val!r}", pos, self.text)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError(f"unexpected token {val or 'end of input'!r}", pos, self.text)


def _binary(op, lhs, rhs):
    if op == "+":
        return lambda env: lhs(env) + rhs(env)
    if op == "-":
        return lambda env: lhs(env) - rhs(env)
    if op == "*":
        return lambda env: lhs(env) * rhs(env)
    if op == "/":
        return lambda env: lhs(env) / rhs(env)
    return lambda env: np.power(lhs(env), rhs(env))


@dataclass(frozen=True)
class Expression:
    """A parsed formula in the coordinates (x1, y1, y2)."""

    source: str
    _fn: Callable

    def __call__(self, x1=0.0, y1=0.0, y2=0.0):
        x1, y1, y2 = np.broadcast_arrays(
            np.asarray(x1, dtype=float), np.asarray(y1, dtype=float), np.asarray(y2, dtype=float)
        )
        out = self._fn({"x1": x1, "y1": y1, "y2": y2})
        return np.broadcast_to(np.asarray(out, dtype=float), x1.shape).copy() if np.ndim(x1) else float(out)

    def __str__(self):
        return self.source


def parse(text: str | float | int) -> Expression:
    """Parse ``text`` into an :class:`Expression`.

    Numbers are accepted directly so configs may write ``V: 1``.
    """
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty formula", 0, str(text))
    return Expression(text, _Parser(text).parse())
