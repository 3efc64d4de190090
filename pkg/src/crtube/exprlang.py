"""A small expression language for defining functions.

Grammar (whitespace is insignificant)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = "-" unary | power ;
    power    = atom [ "^" int_lit ] ;
    int_lit  = [ "-" ] DIGITS ;
    atom     = NUMBER | IDENT | "sqrt" "(" expr ")"
             | "pow" "(" expr "," rational ")" | "(" expr ")" ;
    rational = [ "-" ] NUMBER [ "/" NUMBER ] ;

``^`` binds tighter than unary minus, so ``-t1^2`` is ``-(t1^2)``.
Expressions evaluate over floats or over jets (see :mod:`crtube.jets`).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Union

from .errors import DivisionByZeroJet, DomainError, NonPositiveBase, ParseError, UnknownVariable
from .jets import DEFAULT_DEGREE, Jet1, Jet2

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Sqrt",
    "PowRational",
    "parse",
    "to_source",
    "evaluate",
    "eval_jet",
    "free_variables",
    "BIVARIATE",
    "UNIVARIATE",
]

BIVARIATE = frozenset({"t1", "t2"})
UNIVARIATE = frozenset({"v"})
FUNCTIONS = frozenset({"sqrt", "pow"})


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Sqrt:
    operand: "Expr"


@dataclass(frozen=True)
class PowRational:
    base: "Expr"
    exponent: Fraction


Expr = Union[Num, Var, Neg, Add, Sub, Mul, Div, Pow, Sqrt, PowRational]

_BINARY = {"+": Add, "-": Sub, "*": Mul, "/": Div}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    offset: int


def _byte_offsets(src):
    """Map character index -> UTF-8 byte offset."""
    out = [0]
    for ch in src:
        out.append(out[-1] + len(ch.encode("utf-8")))
    return out


def _tokenize(src):
    boff = _byte_offsets(src)
    toks = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", boff[pos])
        if m.lastgroup != "ws":
            text = m.group()
            kind = m.lastgroup if m.lastgroup != "op" else text
            toks.append(_Tok(kind, text, boff[pos]))
        pos = m.end()
    toks.append(_Tok("end", "", boff[len(src)]))
    return toks


class _Parser:
    def __init__(self, src, variables):
        self.toks = _tokenize(src)
        self.pos = 0
        self.vars = frozenset(variables)

    @property
    def tok(self):
        return self.toks[self.pos]

    def advance(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, kind):
        if self.tok.kind != kind:
            self.fail({kind})
        return self.advance()

    def fail(self, expected):
        t = self.tok
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ParseError(f"unexpected {what}", t.offset, expected)

    def parse(self):
        e = self.expr()
        if self.tok.kind != "end":
            self.fail({"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self):
        left = self.term()
        while self.tok.kind in ("+", "-"):
            op = self.advance().kind
            left = _BINARY[op](left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind in ("*", "/"):
            op = self.advance().kind
            left = _BINARY[op](left, self.unary())
        return left

    def unary(self):
        if self.tok.kind == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "^":
            self.advance()
            sign = 1
            if self.tok.kind == "-":
                self.advance()
                sign = -1
            t = self.tok
            if t.kind != "number" or not t.text.isdigit():
                raise ParseError("exponent must be an integer literal", t.offset, {"integer"})
            self.advance()
            return Pow(base, sign * int(t.text))
        return base

    def rational(self):
        sign = 1
        if self.tok.kind == "-":
            self.advance()
            sign = -1
        num = Fraction(self.expect("number").text)
        if self.tok.kind == "/":
            self.advance()
            den = Fraction(self.expect("number").text)
            if den == 0:
                raise ParseError("zero denominator in rational exponent", self.toks[self.pos - 1].offset)
            num /= den
        return sign * num

    def atom(self):
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Num(float(t.text))
        if t.kind == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.advance()
            if t.text == "sqrt":
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return Sqrt(e)
            if t.text == "pow":
                self.expect("(")
                e = self.expr()
                self.expect(",")
                r = self.rational()
                self.expect(")")
                return PowRational(e, r)
            if t.text not in self.vars:
                raise UnknownVariable(t.text, t.offset, self.vars)
            return Var(t.text)
        self.fail({"number", "identifier", "(", "-"})


def parse(src, variables=BIVARIATE):
    """Parse ``src`` into an AST closed over ``variables``."""
    if not src or not src.strip():
        raise ParseError("empty expression", 0, {"number", "identifier", "(", "-"})
    return _Parser(src, variables).parse()


# printing ---------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}
_SYM = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


def _prec(e):
    return _PREC.get(type(e), 5)


def _num(x):
    r = repr(float(x))
    if r in ("inf", "-inf", "nan"):
        raise ValueError(f"cannot print non-finite literal {x}")
    return r


def to_source(e):
    """Canonical source text; ``parse(to_source(e)) == e`` for parsed ASTs."""
    t = type(e)
    if t is Num:
        if e.value < 0:
            return "(" + "-" + _num(-e.value) + ")"
        return _num(e.value)
    if t is Var:
        return e.name
    if t is Neg:
        inner = to_source(e.operand)
        # ``--x`` and ``-(x*y)`` are both fine; lower precedence needs parens.
        if _prec(e.operand) < _PREC[Neg]:
            inner = f"({inner})"
        return "-" + inner
    if t in _SYM:
        p = _PREC[t]
        ls = to_source(e.left)
        rs = to_source(e.right)
        if _prec(e.left) < p:
            ls = f"({ls})"
        # Left associativity: right operand of equal precedence needs parens.
        if _prec(e.right) <= p:
            rs = f"({rs})"
        return f"{ls} {_SYM[t]} {rs}"
    if t is Pow:
        bs = to_source(e.base)
        if _prec(e.base) <= _PREC[Pow]:
            bs = f"({bs})"
        return f"{bs}^{e.exponent}"
    if t is Sqrt:
        return f"sqrt({to_source(e.operand)})"
    if t is PowRational:
        r = e.exponent
        rs = str(r.numerator) if r.denominator == 1 else f"{r.numerator}/{r.denominator}"
        return f"pow({to_source(e.base)}, {rs})"
    raise TypeError(f"not an expression node: {e!r}")


def free_variables(e):
    t = type(e)
    if t is Num:
        return frozenset()
    if t is Var:
        return frozenset({e.name})
    if t in (Neg, Sqrt):
        return free_variables(e.operand)
    if t in (Pow, PowRational):
        return free_variables(e.base)
    return free_variables(e.left) | free_variables(e.right)


# evaluation -------------------------------------------------------------


def _real_power(x, alpha):
    if isinstance(x, Real):
        if not x > 0:
            raise DomainError(f"real power {alpha} of non-positive value {x}")
        return float(x) ** alpha
    try:
        return x.pow_real(alpha)
    except NonPositiveBase as exc:
        raise DomainError(str(exc)) from exc


def _divide(a, b):
    if isinstance(b, Real) and b == 0:
        raise DivisionByZeroJet("division by zero")
    return a / b


def evaluate(e, env):
    """Evaluate ``e`` with variables bound by ``env`` (floats or jets)."""
    t = type(e)
    if t is Num:
        return e.value
    if t is Var:
        return env[e.name]
    if t is Neg:
        return -evaluate(e.operand, env)
    if t is Add:
        return evaluate(e.left, env) + evaluate(e.right, env)
    if t is Sub:
        return evaluate(e.left, env) - evaluate(e.right, env)
    if t is Mul:
        return evaluate(e.left, env) * evaluate(e.right, env)
    if t is Div:
        return _divide(evaluate(e.left, env), evaluate(e.right, env))
    if t is Pow:
        base = evaluate(e.base, env)
        n = e.exponent
        if isinstance(base, Real):
            if n < 0 and base == 0:
                raise DivisionByZeroJet("zero to a negative power")
            return float(base) ** n
        return base**n
    if t is Sqrt:
        return _real_power(evaluate(e.operand, env), 0.5)
    if t is PowRational:
        return _real_power(evaluate(e.base, env), float(e.exponent))
    raise TypeError(f"not an expression node: {e!r}")


def _lift(value, like):
    """Promote a float result (constant expression) to a jet."""
    if isinstance(value, Real):
        return type(like).constant(float(value), like.degree)
    return value


def eval_jet(e, base, degree=DEFAULT_DEGREE):
    """Jet of ``e`` at ``base``.

    ``base`` is ``(t1, t2)`` for bivariate expressions (returns :class:`Jet2`)
    or a single number ``v`` for univariate ones (returns :class:`Jet1`).
    """
    names = free_variables(e)
    if isinstance(base, Real):
        if names - UNIVARIATE:
            raise ValueError(f"univariate base given for variables {sorted(names)}")
        env = {"v": Jet1.variable(float(base), degree)}
        like = env["v"]
    else:
        t1, t2 = base
        if names - BIVARIATE:
            raise ValueError(f"bivariate base given for variables {sorted(names)}")
        env = {
            "t1": Jet2.variable(1, float(t1), degree),
            "t2": Jet2.variable(2, float(t2), degree),
        }
        like = env["t1"]
    return _lift(evaluate(e, env), like)


def eval_point(e, base):
    """Plain float evaluation at ``base`` (``(t1, t2)`` or ``v``)."""
    if isinstance(base, Real):
        env = {"v": float(base)}
    else:
        env = {"t1": float(base[0]), "t2": float(base[1])}
    value = evaluate(e, env)
    if not math.isfinite(value):
        raise DomainError(f"non-finite value at {base}")
    return float(value)
