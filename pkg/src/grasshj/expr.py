"""One-variable real expressions: parsing, evaluation, differentiation.

Expressions are immutable trees in the single variable ``q``. The grammar
(whitespace insensitive)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("-" | "+") unary | power ;
    power   = atom [ "^" ["-"] integer ] ;
    atom    = number | "q" | constant | func "(" expr ")" | "(" expr ")" ;
    func    = "sin" | "cos" | "exp" | "tanh" | "sqrt" ;

so ``-q^2`` is ``-(q^2)``. Exponents are integer literals only, which keeps
differentiation total. Constants must be declared when parsing and bound
when evaluating (or substituted with :func:`bind`).
"""
from __future__ import annotations

import math
import re
from array import array
from dataclasses import dataclass
from functools import lru_cache

from ._backend import kernels
from ._pykernels import (ADD, COS, DIV, EXP, MUL, NEG, NUM, POWI, SIN, SQRT, SUB, TANH,
                         VAR)
from .errors import (ExprDomainError, ExprSyntaxError, UnboundConstantError,
                     UnknownIdentifierError)

FUNCTIONS = ("sin", "cos", "exp", "tanh", "sqrt")
VARIABLE = "q"


class Expr:
    """Base class for expression nodes.

    Arithmetic operators build simplified trees, so ``Num(0) * e`` is
    ``Num(0)`` and ``e + 0`` is ``e``.
    """

    __slots__ = ()

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer exponents are supported")
        return power(self, n)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expr):
    pass


@dataclass(frozen=True, slots=True)
class Const(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True, slots=True)
class Call(Expr):
    func: str
    arg: Expr


ZERO = Num(0.0)
ONE = Num(1.0)
Q = Var()


def _wrap(x):
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return Num(float(x))
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


def _is_num(e, value=None):
    return isinstance(e, Num) and (value is None or e.value == value)


# -- simplifying constructors (0/1 identities and literal folding) -----------

def add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    if isinstance(b, Neg):
        return sub(a, b.arg)
    return BinOp("+", a, b)


def sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return neg(b)
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    if isinstance(b, Neg):
        return add(a, b.arg)
    return BinOp("-", a, b)


def mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a, -1.0):
        return neg(b)
    if _is_num(b, -1.0):
        return neg(a)
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def div(a, b):
    if _is_num(a, 0.0) and not _is_num(b, 0.0):
        return ZERO
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b) and b.value != 0.0:
        return Num(a.value / b.value)
    return BinOp("/", a, b)


def neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(base, n):
    if n == 0:
        return ONE
    if n == 1:
        return base
    if _is_num(base) and not (base.value == 0.0 and n < 0):
        return Num(base.value ** n)
    return Pow(base, n)


def call(func, arg):
    if func not in FUNCTIONS:
        raise ValueError(f"unknown function {func!r}")
    return Call(func, arg)


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))")


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text, constants):
        self.tokens = _tokenize(text)
        self.i = 0
        self.constants = constants

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            raise ExprSyntaxError(f"expected {value!r}, found {_describe(kind, text)}", pos)

    def parse(self):
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {_describe(kind, text)}", pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = BinOp(op, e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = BinOp(op, e, rhs)
        return e

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text in ("-", "+"):
            self.take()
            arg = self.unary()
            return Neg(arg) if text == "-" else arg
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            sign = 1
            kind, text, pos = self.peek()
            if kind == "op" and text == "-":
                self.take()
                sign = -1
                kind, text, pos = self.peek()
            if kind != "num" or not text.isdigit():
                raise ExprSyntaxError(f"integer exponent expected, found {_describe(kind, text)}",
                                      pos)
            self.take()
            return Pow(base, sign * int(text))
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text == VARIABLE:
                return Q
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in self.constants:
                return Const(text)
            raise UnknownIdentifierError(text, pos)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ExprSyntaxError(f"unexpected {_describe(kind, text)}", pos)


def _describe(kind, text):
    return "end of input" if kind == "end" else repr(text)


def parse(text, constants=()):
    """Parse ``text`` into an expression.

    ``constants`` names the identifiers (besides ``q``) allowed to appear;
    a mapping is accepted and only its keys are used.
    """
    return _Parser(text, frozenset(constants)).parse()


# -- printing -----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e):
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return 5


def to_string(e):
    """Render ``e`` in the parser's grammar; ``parse(to_string(e))`` evaluates
    identically to ``e``."""
    if isinstance(e, Num):
        v = e.value
        if not math.isfinite(v):
            raise ValueError("non-finite literal cannot be printed")
        text = repr(abs(v))
        return "-" + text if math.copysign(1.0, v) < 0 else text
    if isinstance(e, Var):
        return VARIABLE
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        return f"-({inner})" if _prec(e.arg) <= 3 else f"-{inner}"
    if isinstance(e, Pow):
        inner = to_string(e.base)
        if _prec(e.base) <= 4:
            inner = f"({inner})"
        return f"{inner}^{e.exponent}"
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left = to_string(e.left)
        if _prec(e.left) < p:
            left = f"({left})"
        right = to_string(e.right)
        # right operand of - and / needs parentheses at equal precedence
        if _prec(e.right) < p or (_prec(e.right) == p and e.op in "-/") or _prec(e.right) == 3:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


# -- evaluation ---------------------------------------------------------------

def evaluate(e, q, consts=None):
    """Evaluate ``e`` at the real point ``q``.

    Raises ExprDomainError outside the domain and UnboundConstantError for
    constants missing from ``consts``.
    """
    try:
        value = _eval(e, float(q), consts or {})
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise ExprDomainError(f"{to_string(e)} undefined at q={q!r}: {exc}", q) from None
    if not math.isfinite(value):
        raise ExprDomainError(f"{to_string(e)} is not finite at q={q!r}", q)
    return value


def _eval(e, q, consts):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return q
    if isinstance(e, Const):
        try:
            return float(consts[e.name])
        except KeyError:
            raise UnboundConstantError(e.name) from None
    if isinstance(e, Neg):
        return -_eval(e.arg, q, consts)
    if isinstance(e, BinOp):
        a = _eval(e.left, q, consts)
        b = _eval(e.right, q, consts)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    if isinstance(e, Pow):
        r = _eval(e.base, q, consts) ** e.exponent
        if isinstance(r, complex):
            raise ValueError("complex power")
        return r
    if isinstance(e, Call):
        a = _eval(e.arg, q, consts)
        if e.func == "sqrt":
            if a < 0:
                raise ValueError("sqrt of a negative number")
            return math.sqrt(a)
        return getattr(math, e.func)(a)
    raise TypeError(f"not an expression: {e!r}")


def free_constants(e):
    """Names of the constants appearing in ``e``."""
    if isinstance(e, Const):
        return {e.name}
    if isinstance(e, (Neg, Call)):
        return free_constants(e.arg)
    if isinstance(e, Pow):
        return free_constants(e.base)
    if isinstance(e, BinOp):
        return free_constants(e.left) | free_constants(e.right)
    return set()


def bind(e, consts):
    """Substitute bound constants by literals (and re-simplify)."""
    if isinstance(e, Const):
        if e.name in consts:
            return Num(float(consts[e.name]))
        return e
    if isinstance(e, Neg):
        return neg(bind(e.arg, consts))
    if isinstance(e, BinOp):
        a, b = bind(e.left, consts), bind(e.right, consts)
        return {"+": add, "-": sub, "*": mul, "/": div}[e.op](a, b)
    if isinstance(e, Pow):
        return power(bind(e.base, consts), e.exponent)
    if isinstance(e, Call):
        return Call(e.func, bind(e.arg, consts))
    return e


# -- differentiation ------------------------------------------------------------

@lru_cache(maxsize=4096)
def diff(e):
    """Symbolic derivative with respect to ``q``."""
    if isinstance(e, (Num, Const)):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return neg(diff(e.arg))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = diff(a), diff(b)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        # quotient rule
        return div(sub(mul(da, b), mul(a, db)), power(b, 2))
    if isinstance(e, Pow):
        n = e.exponent
        return mul(mul(Num(float(n)), power(e.base, n - 1)), diff(e.base))
    if isinstance(e, Call):
        u = e.arg
        du = diff(u)
        if _is_num(du, 0.0):
            return ZERO
        if e.func == "sin":
            outer = Call("cos", u)
        elif e.func == "cos":
            outer = neg(Call("sin", u))
        elif e.func == "exp":
            outer = e
        elif e.func == "tanh":
            outer = sub(ONE, power(e, 2))
        else:
            outer = div(Num(0.5), e)
        return mul(outer, du)
    raise TypeError(f"not an expression: {e!r}")


# -- compilation to kernel bytecode --------------------------------------------

_BINOPS = {"+": ADD, "-": SUB, "*": MUL, "/": DIV}
_FUNCS = {"sin": SIN, "cos": COS, "exp": EXP, "tanh": TANH, "sqrt": SQRT}
MAX_STACK = 64


class Program:
    """Postfix bytecode for an expression with all constants bound.

    Calling a program evaluates it with the active kernel backend and raises
    ExprDomainError where the expression is undefined.
    """

    __slots__ = ("expr", "code", "args", "depth")

    def __init__(self, expr, code, args, depth):
        self.expr = expr
        self.code = code
        self.args = args
        self.depth = depth

    def __call__(self, x):
        value = kernels.eval_program(self.code, self.args, float(x))
        if value != value:
            raise ExprDomainError(f"{to_string(self.expr)} undefined at q={x!r}", x)
        return value

    def raw(self, x):
        """Evaluate without the NaN check."""
        return kernels.eval_program(self.code, self.args, float(x))


def compile_expr(e, consts=None):
    """Compile ``e`` into a :class:`Program`; every constant must be bound."""
    code = array("i")
    args = array("d")
    consts = consts or {}

    def emit(node):
        if isinstance(node, Num):
            code.append(NUM)
            args.append(node.value)
            return 1
        if isinstance(node, Var):
            code.append(VAR)
            args.append(0.0)
            return 1
        if isinstance(node, Const):
            if node.name not in consts:
                raise UnboundConstantError(node.name)
            code.append(NUM)
            args.append(float(consts[node.name]))
            return 1
        if isinstance(node, Neg):
            d = emit(node.arg)
            code.append(NEG)
            args.append(0.0)
            return d
        if isinstance(node, Pow):
            d = emit(node.base)
            code.append(POWI)
            args.append(float(node.exponent))
            return d
        if isinstance(node, Call):
            d = emit(node.arg)
            code.append(_FUNCS[node.func])
            args.append(0.0)
            return d
        if isinstance(node, BinOp):
            d1 = emit(node.left)
            d2 = emit(node.right)
            code.append(_BINOPS[node.op])
            args.append(0.0)
            return max(d1, d2 + 1)
        raise TypeError(f"not an expression: {node!r}")

    depth = emit(e)
    if depth > MAX_STACK:
        raise ValueError(f"expression too deeply nested (stack depth {depth})")
    return Program(e, code, args, depth)


@lru_cache(maxsize=512)
def compiled(e):
    """Cached :func:`compile_expr` for constant-free expressions."""
    return compile_expr(e)
