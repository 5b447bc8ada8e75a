"""Time-dependent boundary potentials c(t, x, y) with exact derivatives.

A small expression language (``+ - * /``, integer powers, ``sin cos exp``,
variables ``t x y`` and the constant ``pi``) is parsed into an immutable AST
that can be evaluated on numpy arrays and differentiated symbolically.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParseError

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "parse_expr",
    "differentiate",
    "PotentialSpec",
    "laplacian",
]

VARIABLES = ("t", "x", "y")
RESERVED = ("z",)
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
CONSTANTS = {"pi": math.pi}

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


class Expr:
    precedence = _PREC_ATOM

    def evaluate(self, t=0.0, x=0.0, y=0.0):
        env = {"t": t, "x": x, "y": y}
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return self._eval(env)

    def __str__(self):
        return self.to_string()

    def _wrap(self, child, min_prec):
        s = child.to_string()
        return f"({s})" if child.precedence < min_prec else s


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def _eval(self, env):
        return self.value

    def to_string(self):
        v = self.value
        if v < 0:
            return f"(-{Num(-v).to_string()})"
        if v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return repr(float(v))


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def _eval(self, env):
        return env[self.name]

    def to_string(self):
        return self.name


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr
    precedence = _PREC_NEG

    def _eval(self, env):
        return -self.arg._eval(env)

    def to_string(self):
        return "-" + self._wrap(self.arg, _PREC_NEG)


_BINARY = {
    "+": (_PREC_ADD, lambda a, b: a + b),
    "-": (_PREC_ADD, lambda a, b: a - b),
    "*": (_PREC_MUL, lambda a, b: a * b),
    "/": (_PREC_MUL, lambda a, b: a / b),
}


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def precedence(self):
        return _BINARY[self.op][0]

    def _eval(self, env):
        return _BINARY[self.op][1](self.left._eval(env), self.right._eval(env))

    def to_string(self):
        p = self.precedence
        # left-associative: a right operand of equal precedence needs parentheses
        return f"{self._wrap(self.left, p)} {self.op} {self._wrap(self.right, p + 1)}"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int
    precedence = _PREC_POW

    def _eval(self, env):
        b = self.base._eval(env)
        if self.exponent < 0:
            return 1.0 / np.power(b, -self.exponent)
        return np.power(b, self.exponent)

    def to_string(self):
        return f"{self._wrap(self.base, _PREC_ATOM)}^{self.exponent}"


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    def _eval(self, env):
        return FUNCTIONS[self.func](self.arg._eval(env))

    def to_string(self):
        return f"{self.func}({self.arg.to_string()})"


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m:
                bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
                raise ParseError(f"unexpected character {text[bad]!r}", self._offset(bad))
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), self._offset(start)))
            pos = m.end()
        self.end = self._offset(len(text))
        self.i = 0

    def _offset(self, idx):
        return len(self.text[:idx].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, self.end)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def fail(self, message):
        kind, value, offset = self.peek()
        found = "end of input" if kind is None else repr(value)
        raise ParseError(f"syntax error: {message}, found {found}", offset)

    def parse(self):
        if not self.tokens:
            raise ParseError("syntax error: empty expression", 0)
        e = self.expr()
        if self.peek()[0] is not None:
            self.fail("expected operator or end of input")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            arg = self.unary()
            # a negated literal is a literal, so printing and re-parsing agree
            return Num(-arg.value) if isinstance(arg, Num) else Neg(arg)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] != ("op", "^"):
            return base
        self.take()
        sign = 1
        if self.peek()[:2] in (("op", "-"), ("op", "+")):
            sign = -1 if self.take()[1] == "-" else 1
        kind, value, offset = self.peek()
        if kind != "num":
            self.fail("expected an integer exponent")
        if not value.isdigit():
            raise ParseError(f"only integer exponents are supported, got {value!r}", offset)
        self.take()
        if self.peek()[:2] == ("op", "^"):
            self.fail("chained powers need parentheses")
        return Pow(base, sign * int(value))

    def atom(self):
        kind, value, offset = self.peek()
        if kind == "num":
            self.take()
            return Num(float(value))
        if kind == "name":
            self.take()
            if value in FUNCTIONS:
                if self.peek()[:2] != ("op", "("):
                    self.fail(f"expected '(' after {value}")
                self.take()
                arg = self.expr()
                if self.peek()[:2] != ("op", ")"):
                    self.fail("expected ')'")
                self.take()
                return Call(value, arg)
            if value in VARIABLES:
                return Var(value)
            if value in CONSTANTS:
                return Num(CONSTANTS[value])
            if value in RESERVED:
                raise ParseError(f"identifier {value!r} is reserved (2D expressions use t, x, y)", offset)
            raise ParseError(f"unknown identifier {value!r}", offset)
        if (kind, value) == ("op", "("):
            self.take()
            e = self.expr()
            if self.peek()[:2] != ("op", ")"):
                self.fail("expected ')'")
            self.take()
            return e
        self.fail("expected a number, variable, function or '('")


def parse_expr(text):
    if not isinstance(text, str) or not text.strip():
        raise ParseError("syntax error: empty expression", 0)
    return _Parser(text).parse()


ZERO, ONE = Num(0.0), Num(1.0)


def _is_num(e, value=None):
    return isinstance(e, Num) and (value is None or e.value == value)


def _add(a, b):
    if _is_num(a, 0):
        return b
    if _is_num(b, 0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_num(b, 0):
        return a
    if _is_num(a, 0):
        return _neg(b)
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def _neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is_num(a, 0) or _is_num(b, 0):
        return ZERO
    if _is_num(a, 1):
        return b
    if _is_num(b, 1):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def _div(a, b):
    if _is_num(a, 0):
        return ZERO
    if _is_num(b, 1):
        return a
    return BinOp("/", a, b)


def _pow(a, n):
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, n)


def differentiate(e, var):
    """Exact partial derivative of ``e`` with respect to ``var``."""
    if var not in VARIABLES:
        raise ValueError(f"cannot differentiate with respect to {var!r}")
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg, var))
    if isinstance(e, BinOp):
        da, db = differentiate(e.left, var), differentiate(e.right, var)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, e.right), _mul(e.left, db))
        num = _sub(_mul(da, e.right), _mul(e.left, db))
        return _div(num, _pow(e.right, 2))
    if isinstance(e, Pow):
        if e.exponent == 0:
            return ZERO
        inner = _mul(Num(float(e.exponent)), _pow(e.base, e.exponent - 1))
        return _mul(inner, differentiate(e.base, var))
    if isinstance(e, Call):
        da = differentiate(e.arg, var)
        if e.func == "sin":
            outer = Call("cos", e.arg)
        elif e.func == "cos":
            outer = _neg(Call("sin", e.arg))
        else:
            outer = e
        return _mul(outer, da)
    raise TypeError(f"not an expression: {e!r}")


class PotentialSpec:
    """A potential c(t, x, y) together with its gradient and Laplacian."""

    def __init__(self, text_or_expr):
        if isinstance(text_or_expr, Expr):
            self.expr = text_or_expr
        else:
            self.expr = parse_expr(text_or_expr)
        self.text = self.expr.to_string()
        self.grad = (differentiate(self.expr, "x"), differentiate(self.expr, "y"))
        self.hessian = (
            differentiate(self.grad[0], "x"),
            differentiate(self.grad[0], "y"),
            differentiate(self.grad[1], "y"),
        )
        self.lap = _add(self.hessian[0], self.hessian[2])
        self.window = (0.0, 1.0)

    def __repr__(self):
        return f"PotentialSpec({self.text!r})"

    @staticmethod
    def _full(value, x, y):
        return np.broadcast_to(np.asarray(value, dtype=float), np.broadcast(x, y).shape).copy()

    def value(self, t, x, y):
        return self._full(self.expr.evaluate(t, x, y), x, y)

    def gradient(self, t, x, y):
        return (
            self._full(self.grad[0].evaluate(t, x, y), x, y),
            self._full(self.grad[1].evaluate(t, x, y), x, y),
        )

    def laplacian(self, t, x, y):
        m = self._full(self.lap.evaluate(t, x, y), x, y)
        if not np.all(np.isfinite(m)):
            raise NumericError(f"Laplacian of {self.text} is singular at some evaluation point")
        return m


def laplacian(spec, t, p):
    """m_t(p) for a single point ``p = (x, y)``."""
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("point must be finite")
    return float(spec.laplacian(t, x, y))
