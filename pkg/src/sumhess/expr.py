"""Arithmetic expressions for problem data in configuration files.

Grammar (loosest to tightest)::

    expr  := expr ('+' | '-') expr
           | expr ('*' | '/') expr
           | '-' expr
           | expr '^' expr            (right associative)
           | number | name | name '(' expr {',' expr} ')' | '(' expr ')'

Variables are ``x y z u t nu_x nu_y nu_z`` (``nu_*`` is the outward normal on
a boundary face); constants ``pi`` and ``e``.  Functions: ``exp log sin cos
sqrt abs`` (one argument), ``min max`` (two) and ``ifle(a, b, p, q)`` which is
``p`` where ``a <= b`` and ``q`` elsewhere.  ``ifle`` is what :func:`deriv`
produces for ``min``, ``max`` and ``abs``: at ties the left branch wins, so
``d min(a, b) = ifle(a, b, da, db)``, ``d max(a, b) = ifle(b, a, da, db)`` and
``d abs(a) = ifle(0, a, da, -da)``.

Evaluation is vectorized over numpy arrays.  Invalid operations such as
``log`` of a non-positive number raise :class:`ExprDomainError` naming the
offending subexpression instead of producing NaN.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidArgument

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Const",
    "Neg",
    "Bin",
    "Call",
    "ExprSyntaxError",
    "ExprDomainError",
    "VARIABLES",
    "parse",
    "evaluate",
    "deriv",
    "to_string",
    "free_variables",
]

VARIABLES = ("x", "y", "z", "u", "t", "nu_x", "nu_y", "nu_z")
CONSTANTS = {"pi": math.pi, "e": math.e}
ARITY = {"exp": 1, "log": 1, "sin": 1, "cos": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2, "ifle": 4}


class ExprSyntaxError(InvalidArgument):
    """Malformed expression; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprDomainError(DomainError):
    """An operation left its domain; ``node`` is the failing subexpression."""

    def __init__(self, message: str, node: "Expr"):
        super().__init__(f"{message} in '{to_string(node)}'")
        self.node = node


class Expr:
    """Base class of the immutable expression tree."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Const(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Bin(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    args: tuple[Expr, ...]


# --- tokenizer -----------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    byte_at = _byte_offsets(src)
    while True:
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            rest = src[pos:]
            stripped = rest.lstrip()
            if not stripped:
                break
            bad = pos + len(rest) - len(stripped)
            raise ExprSyntaxError(f"unexpected character {stripped[0]!r}", byte_at(bad))
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), byte_at(m.start(kind))))
        pos = m.end()
    toks.append(_Tok("end", "", byte_at(len(src))))
    return toks


def _byte_offsets(src: str):
    if src.isascii():
        return lambda i: i
    return lambda i: len(src[:i].encode("utf-8"))


# --- parser ------------------------------------------------------------------

_BINARY = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_UNARY_PREC = 3


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> None:
        tok = self.take()
        if tok.text != text:
            what = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {what}", tok.offset)

    def expr(self, rbp: int = 0) -> Expr:
        left = self.prefix()
        while True:
            tok = self.peek()
            prec = _BINARY.get(tok.text) if tok.kind == "op" else None
            if prec is None or prec <= rbp:
                break
            self.take()
            # '^' is right associative: parse its right side at one below its power
            right = self.expr(prec - 1 if tok.text == "^" else prec)
            left = Bin(tok.text, left, right)
        return left

    def prefix(self) -> Expr:
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.text == "-":
            return Neg(self.expr(_UNARY_PREC))
        if tok.text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "name":
            name = tok.text
            if name in ARITY:
                if self.peek().text != "(":
                    raise ExprSyntaxError(f"function {name!r} needs an argument list", self.peek().offset)
                self.take()
                args = [self.expr()]
                while self.peek().text == ",":
                    self.take()
                    args.append(self.expr())
                close = self.peek()
                self.expect(")")
                if len(args) != ARITY[name]:
                    raise ExprSyntaxError(
                        f"{name} takes {ARITY[name]} argument(s), got {len(args)}", close.offset
                    )
                return Call(name, tuple(args))
            if name in VARIABLES:
                return Var(name)
            if name in CONSTANTS:
                return Const(name)
            raise ExprSyntaxError(f"unknown identifier {name!r}", tok.offset)
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"unexpected {what}", tok.offset)


def parse(src: str) -> Expr:
    """Parse ``src`` into an expression tree.

    >>> to_string(parse("2*x^2"))
    '2*x^2'
    """
    if not isinstance(src, str):
        raise InvalidArgument("expression source must be a string")
    p = _Parser(src)
    tree = p.expr()
    tok = p.peek()
    if tok.kind != "end":
        raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset)
    return tree


# --- printing ------------------------------------------------------------------


def _prec(node: Expr) -> int:
    if isinstance(node, Bin):
        return _BINARY[node.op]
    if isinstance(node, Neg):
        return _UNARY_PREC
    if isinstance(node, Num) and node.value < 0:
        return _UNARY_PREC
    return 5


def _num(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def to_string(node: Expr) -> str:
    """Render with the fewest parentheses that parse back to the same tree."""
    if isinstance(node, Num):
        return _num(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Neg):
        inner = to_string(node.arg)
        return "-" + (f"({inner})" if _prec(node.arg) < _UNARY_PREC else inner)
    if isinstance(node, Call):
        return f"{node.fn}(" + ", ".join(to_string(a) for a in node.args) + ")"
    p = _BINARY[node.op]
    left, right = to_string(node.left), to_string(node.right)
    lp, rp = _prec(node.left), _prec(node.right)
    if lp < p or (node.op == "^" and lp <= p):
        left = f"({left})"
    if rp < p or (rp == p and node.op != "^"):
        right = f"({right})"
    sep = " " if p == 1 else ""
    return f"{left}{sep}{node.op}{sep}{right}"


# --- evaluation ----------------------------------------------------------------


def free_variables(node: Expr) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Neg):
        return free_variables(node.arg)
    if isinstance(node, Bin):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, Call):
        out: set[str] = set()
        for a in node.args:
            out |= free_variables(a)
        return out
    return set()


def evaluate(node: Expr, env: dict):
    """Evaluate with numpy broadcasting over the values in ``env``.

    Returns a float when every input is scalar, otherwise an array.
    """
    with np.errstate(all="ignore"):
        out = _eval(node, env)
    return float(out) if np.ndim(out) == 0 else out


def _check(value, node: Expr):
    if not np.all(np.isfinite(value)):
        raise ExprDomainError("non-finite result", node)
    return value


def _eval(node: Expr, env: dict):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Var):
        if node.name not in env:
            raise InvalidArgument(f"no value supplied for variable {node.name!r}")
        return np.asarray(env[node.name], dtype=float)
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Bin):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExprDomainError("division by zero", node)
            return _check(a / b, node)
        bad = (np.asarray(a) < 0) & (np.asarray(b) != np.round(b))
        if np.any(bad) or np.any((np.asarray(a) == 0) & (np.asarray(b) < 0)):
            raise ExprDomainError("power outside its domain", node)
        return _check(np.power(a, b), node)
    args = [_eval(a, env) for a in node.args]
    fn = node.fn
    if fn == "log":
        if np.any(np.asarray(args[0]) <= 0):
            raise ExprDomainError("log of a non-positive value", node)
        return np.log(args[0])
    if fn == "sqrt":
        if np.any(np.asarray(args[0]) < 0):
            raise ExprDomainError("sqrt of a negative value", node)
        return np.sqrt(args[0])
    if fn == "exp":
        return _check(np.exp(args[0]), node)
    if fn == "sin":
        return np.sin(args[0])
    if fn == "cos":
        return np.cos(args[0])
    if fn == "abs":
        return np.abs(args[0])
    if fn == "min":
        return np.minimum(args[0], args[1])
    if fn == "max":
        return np.maximum(args[0], args[1])
    a, b, p, q = args
    return np.where(np.asarray(a) <= b, p, q)


# --- differentiation -------------------------------------------------------

_ZERO = Num(0.0)
_ONE = Num(1.0)


def _is(node: Expr, v: float) -> bool:
    return isinstance(node, Num) and node.value == v


def _neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if isinstance(b, Neg):
        return _sub(a, b.arg)
    return Bin("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Bin("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0) or _is(b, 0):
        return _ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if _is(a, -1):
        return _neg(b)
    if _is(b, -1):
        return _neg(a)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is(a, 0):
        return _ZERO
    if _is(b, 1):
        return a
    return Bin("/", a, b)


def _pow(a: Expr, b: Expr) -> Expr:
    if _is(b, 1):
        return a
    if _is(b, 0):
        return _ONE
    return Bin("^", a, b)


def deriv(node: Expr, var: str) -> Expr:
    """Symbolic partial derivative with light constant folding.

    >>> to_string(deriv(parse("-u + x"), "u"))
    '-1'
    """
    if var not in VARIABLES:
        raise InvalidArgument(f"unknown variable {var!r}")
    return _d(node, var)


def _d(node: Expr, v: str) -> Expr:
    if isinstance(node, (Num, Const)):
        return _ZERO
    if isinstance(node, Var):
        return _ONE if node.name == v else _ZERO
    if v not in free_variables(node):
        return _ZERO
    if isinstance(node, Neg):
        return _neg(_d(node.arg, v))
    if isinstance(node, Bin):
        a, b = node.left, node.right
        da, db = _d(a, v), _d(b, v)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if node.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, Num(2.0)))
        if v not in free_variables(b):
            return _mul(_mul(b, _pow(a, _sub(b, _ONE))), da)
        # a^b = exp(b log a)
        return _mul(node, _add(_mul(db, Call("log", (a,))), _div(_mul(b, da), a)))
    a = node.args[0]
    da = _d(a, v)
    fn = node.fn
    if fn == "exp":
        return _mul(node, da)
    if fn == "log":
        return _div(da, a)
    if fn == "sin":
        return _mul(Call("cos", (a,)), da)
    if fn == "cos":
        return _neg(_mul(Call("sin", (a,)), da))
    if fn == "sqrt":
        return _div(da, _mul(Num(2.0), node))
    if fn == "abs":
        return _branch(_ZERO, a, da, _neg(da))
    if fn == "min":
        return _branch(a, node.args[1], da, _d(node.args[1], v))
    if fn == "max":
        return _branch(node.args[1], a, da, _d(node.args[1], v))
    c, d_, p, q = node.args
    return _branch(c, d_, _d(p, v), _d(q, v))


def _branch(a: Expr, b: Expr, p: Expr, q: Expr) -> Expr:
    if p == q:
        return p
    return Call("ifle", (a, b, p, q))
