"""Closed-form scalar expressions in chart coordinates ``x1 ... xn``.

Expressions are immutable trees built from four node kinds (:class:`Const`,
:class:`Var`, :class:`Unary`, :class:`Binary`).  The module offers a parser,
a printer whose output parses back to the same tree, exact recursive
evaluation, and symbolic differentiation.  Simplification is deliberately
minimal: constant folding, ``x+0``, ``x*1`` and ``x*0`` (plus their mirror
images), which is enough to keep derivative trees from filling up with
zeros.

The grammar is documented in ``docs/grammar.txt``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import DomainError, ExprSyntaxError, VariableIndexError

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "FUNCTIONS",
    "parse_expr",
    "to_text",
    "eval_expr",
    "diff_expr",
    "as_expr",
    "const",
    "var",
    "neg",
    "add",
    "sub",
    "mul",
    "div",
    "power",
    "func",
    "is_zero",
    "is_const",
    "variables",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")


class Expr:
    """Base class of expression nodes; supports Python arithmetic operators."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __rpow__(self, other):
        return power(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, slots=True, repr=False)
class Const(Expr):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"constants must be finite, got {self.value!r}")
        object.__setattr__(self, "value", float(self.value))

    def __repr__(self):
        return _num_text(self.value)


@dataclass(frozen=True, slots=True, repr=False)
class Var(Expr):
    index: int  # 1-based coordinate index

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("variable indices start at 1")

    def __repr__(self):
        return f"x{self.index}"


@dataclass(frozen=True, slots=True, repr=False)
class Unary(Expr):
    op: str
    arg: Expr

    def __post_init__(self):
        if self.op != "neg" and self.op not in FUNCTIONS:
            raise ValueError(f"unknown unary operator {self.op!r}")

    def __repr__(self):
        return f"{self.op}({self.arg!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary operator {self.op!r}")

    def __repr__(self):
        return f"{self.op}({self.left!r}, {self.right!r})"


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Const(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def const(value: float) -> Const:
    return Const(float(value))


def var(index: int) -> Var:
    return Var(index)


def is_const(e: Expr, value: float | None = None) -> bool:
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


def is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


# ---------------------------------------------------------------------------
# smart constructors (the only place simplification happens)


def _fold(fn, *args):
    """Fold constants; returns None when the value is not a finite real."""
    try:
        value = fn(*args)
    except (ValueError, ZeroDivisionError, OverflowError):
        return None
    if isinstance(value, complex) or not math.isfinite(value):
        return None
    return Const(value)


def _is_neg(e: Expr) -> bool:
    return isinstance(e, Unary) and e.op == "neg"


def _strip(e: Expr) -> Expr:
    return e.arg if _is_neg(e) else e


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(lambda u, v: u + v, a.value, b.value) or Binary("add", a, b)
    if is_zero(a):
        return b
    if is_zero(b):
        return a
    if _is_neg(b):
        return sub(a, b.arg)
    if _is_neg(a):
        return sub(b, a.arg)
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(lambda u, v: u - v, a.value, b.value) or Binary("sub", a, b)
    if is_zero(b):
        return a
    if is_zero(a):
        return neg(b)
    if _is_neg(b):
        return add(a, b.arg)
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(lambda u, v: u * v, a.value, b.value) or Binary("mul", a, b)
    if is_zero(a) or is_zero(b):
        return ZERO
    if is_const(a, 1.0):
        return b
    if is_const(b, 1.0):
        return a
    if _is_neg(a) or _is_neg(b):
        return neg(mul(_strip(a), _strip(b))) if _is_neg(a) != _is_neg(b) else mul(_strip(a), _strip(b))
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(lambda u, v: u / v, a.value, b.value) or Binary("div", a, b)
    if is_const(b, 1.0):
        return a
    if _is_neg(a) or _is_neg(b):
        return neg(div(_strip(a), _strip(b))) if _is_neg(a) != _is_neg(b) else div(_strip(a), _strip(b))
    return Binary("div", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(math.pow, a.value, b.value) or Binary("pow", a, b)
    if is_const(b, 1.0):
        return a
    return Binary("pow", a, b)


_MATH = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "sinh": math.sinh,
    "cosh": math.cosh,
}


def func(name: str, a: Expr) -> Expr:
    if name not in _MATH:
        raise ValueError(f"unknown function {name!r}")
    if isinstance(a, Const):
        folded = _fold(_MATH[name], a.value)
        if folded is not None:
            return folded
    return Unary(name, a)


def variables(e: Expr) -> set[int]:
    out: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.index)
        elif isinstance(node, Unary):
            stack.append(node.arg)
        elif isinstance(node, Binary):
            stack.append(node.left)
            stack.append(node.right)
    return out


# ---------------------------------------------------------------------------
# parser

_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_VARIABLE = re.compile(r"x(\d+)")


class _Parser:
    def __init__(self, text: str, n: int, aliases: Mapping[str, int]):
        self.text = text
        self.n = n
        self.aliases = aliases
        self.pos = 0

    def offset(self, pos: int | None = None) -> int:
        pos = self.pos if pos is None else pos
        return len(self.text[:pos].encode("utf-8"))

    def fail(self, message: str, pos: int | None = None):
        raise ExprSyntaxError(message, self.offset(pos), self.text)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            found = repr(self.peek()) if self.peek() else "end of input"
            self.fail(f"expected {ch!r}, found {found}")
        self.pos += 1

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek():
            self.fail(f"unexpected {self.peek()!r}")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek() in ("+", "-"):
            op = "add" if self.text[self.pos] == "+" else "sub"
            self.pos += 1
            left = Binary(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.factor()
        while self.peek() in ("*", "/"):
            op = "mul" if self.text[self.pos] == "*" else "div"
            self.pos += 1
            left = Binary(op, left, self.factor())
        return left

    def factor(self) -> Expr:
        base = self.base()
        if self.peek() == "^":
            self.pos += 1
            return Binary("pow", base, self.factor())
        return base

    def base(self) -> Expr:
        ch = self.peek()
        start = self.pos
        if not ch:
            self.fail("unexpected end of input")
        if ch == "-":
            self.pos += 1
            operand = self.base()
            if isinstance(operand, Const):
                return Const(-operand.value)
            return Unary("neg", operand)
        if ch == "(":
            self.pos += 1
            inner = self.expr()
            self.expect(")")
            return inner
        m = _NUMBER.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            value = float(m.group())
            if not math.isfinite(value):
                self.fail("numeric literal overflows", start)
            return Const(value)
        m = _IDENT.match(self.text, self.pos)
        if m:
            name = m.group()
            self.pos = m.end()
            if name in self.aliases:
                return Var(self.aliases[name])
            vm = _VARIABLE.fullmatch(name)
            if vm:
                k = int(vm.group(1))
                if not 1 <= k <= self.n:
                    raise VariableIndexError(
                        f"variable index out of range: {name} (n = {self.n})",
                        self.offset(start),
                        self.text,
                    )
                return Var(k)
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(name, arg)
            self.fail(f"unknown identifier {name!r}", start)
        self.fail(f"unexpected {ch!r}")


def parse_expr(text: str, n: int, aliases: Mapping[str, int] | None = None) -> Expr:
    """Parse ``text`` into an expression over ``x1 .. xn``.

    ``aliases`` maps extra identifiers to variable indices; paths use it to
    spell their parameter as ``t``.
    """
    if n < 1:
        raise ValueError("dimension n must be at least 1")
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text)
    return _Parser(text, n, aliases or {}).parse()


# ---------------------------------------------------------------------------
# printer

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "pow": 3}


def _num_text(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return 4
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 4
    return 5


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_text(e)
    return f"({s})" if _prec(e) < min_prec else s


def to_text(e: Expr) -> str:
    """Render ``e`` as text accepted by :func:`parse_expr`."""
    if isinstance(e, Const):
        return _num_text(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Unary):
        if e.op == "neg":
            return "-" + _wrap(e.arg, 4)
        return f"{e.op}({to_text(e.arg)})"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        if e.op == "pow":
            return f"{_wrap(e.left, 4)}^{_wrap(e.right, 3)}"
        sym = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}[e.op]
        return f"{_wrap(e.left, p)}{sym}{_wrap(e.right, p + 1)}"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# evaluation


def _check(value: float, node: Expr, p) -> float:
    if not math.isfinite(value):
        raise DomainError("non-finite result", node, p)
    return value


def eval_expr(e: Expr, p: Sequence[float]) -> float:
    """Evaluate ``e`` at the point ``p`` (``p[k-1]`` is the value of ``xk``)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.index > len(p):
            raise IndexError(f"x{e.index} needs a point with at least {e.index} coordinates")
        return float(p[e.index - 1])
    if isinstance(e, Unary):
        a = eval_expr(e.arg, p)
        if e.op == "neg":
            return -a
        if e.op == "log" and a <= 0.0:
            raise DomainError("log of non-positive value", e, p)
        if e.op == "sqrt" and a < 0.0:
            raise DomainError("sqrt of negative value", e, p)
        try:
            return _check(_MATH[e.op](a), e, p)
        except OverflowError:
            raise DomainError("overflow", e, p) from None
    if isinstance(e, Binary):
        a = eval_expr(e.left, p)
        b = eval_expr(e.right, p)
        op = e.op
        if op == "add":
            return _check(a + b, e, p)
        if op == "sub":
            return _check(a - b, e, p)
        if op == "mul":
            return _check(a * b, e, p)
        if op == "div":
            if b == 0.0:
                raise DomainError("division by zero", e, p)
            return _check(a / b, e, p)
        if a < 0.0 and b != math.floor(b):
            raise DomainError("negative base with non-integer exponent", e, p)
        if a == 0.0 and b < 0.0:
            raise DomainError("zero raised to a negative power", e, p)
        try:
            return _check(math.pow(a, b), e, p)
        except OverflowError:
            raise DomainError("overflow", e, p) from None
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# differentiation


def diff_expr(e: Expr, k: int) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to ``xk``."""
    if k < 1:
        raise ValueError("coordinate indices start at 1")
    return _d(e, k)


def _d(e: Expr, k: int) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == k else ZERO
    if isinstance(e, Unary):
        a = e.arg
        da = _d(a, k)
        if is_zero(da):
            return ZERO
        op = e.op
        if op == "neg":
            return neg(da)
        if op == "sin":
            outer = func("cos", a)
        elif op == "cos":
            outer = neg(func("sin", a))
        elif op == "tan":
            outer = div(ONE, power(func("cos", a), Const(2.0)))
        elif op == "exp":
            outer = e
        elif op == "log":
            return div(da, a)
        elif op == "sqrt":
            return div(da, mul(Const(2.0), e))
        elif op == "sinh":
            outer = func("cosh", a)
        else:  # cosh
            outer = func("sinh", a)
        return mul(outer, da)

    a, b = e.left, e.right
    op = e.op
    if op in ("add", "sub"):
        da, db = _d(a, k), _d(b, k)
        return add(da, db) if op == "add" else sub(da, db)
    if op == "mul":
        return add(mul(_d(a, k), b), mul(a, _d(b, k)))
    if op == "div":
        da, db = _d(a, k), _d(b, k)
        if is_zero(db):
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
    # pow
    if isinstance(b, Const):
        da = _d(a, k)
        if is_zero(da):
            return ZERO
        return mul(mul(b, power(a, Const(b.value - 1.0))), da)
    # non-constant exponent: a^b = exp(b*log(a)), valid for a > 0
    return _d(Unary("exp", mul(b, Unary("log", a))), k)
