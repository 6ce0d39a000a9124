"""One-variable coefficient expressions.

Drift and diffusion coefficients are written as small text expressions in the
free variable ``y`` with named parameters, e.g. ``"p*y + q"`` or
``"max(-c, min(c, -y))"``.  This module parses them into an immutable tree,
evaluates the tree (on floats or numpy arrays), prints it back, and
differentiates it symbolically.

Grammar (loosest binding first)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom (('^' | '**') unary)?
    atom    := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

``y`` is the variable; any other identifier is a parameter.  Functions:
``exp log sqrt abs sin cos`` (one argument), ``min max`` (two) and
``ifle(a, b, c, d)`` which is ``c`` when ``a <= b`` and ``d`` otherwise.
``ifle`` mostly shows up in derivatives of ``min``/``max``/``abs``.
Exponents must not depend on ``y``.

At a kink of ``min``/``max`` the derivative of the first argument is used;
``abs`` has derivative 1 at 0.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

from .errors import (
    ExprDomainError,
    ExprSyntaxError,
    UnboundParameterError,
    UnknownFunctionError,
)

VARIABLE = "y"
UNARY_FUNCTIONS = ("exp", "log", "sqrt", "abs", "sin", "cos")
_ARITY = {**{name: 1 for name in UNARY_FUNCTIONS}, "min": 2, "max": 2, "ifle": 4}


class Node:
    """Base class of expression tree nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, repr=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    pass


@dataclass(frozen=True)
class Param(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class Add(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Sub(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Mul(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Div(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: Node


@dataclass(frozen=True)
class Call(Node):
    name: str
    arg: Node


@dataclass(frozen=True)
class Min(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Max(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class IfLe(Node):
    a: Node
    b: Node
    then: Node
    other: Node


ExprAst = Union[Const, Var, Param, Neg, Add, Sub, Mul, Div, Pow, Call, Min, Max, IfLe]


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tok_text = m.group()
            if kind == "op" and tok_text == "**":
                tok_text = "^"
            tokens.append(_Tok(kind, tok_text, pos))
        pos = m.end()
    tokens.append(_Tok("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.tokens[self.i]

    def advance(self) -> _Tok:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind != "op":
            found = "end of input" if self.tok.kind == "eof" else repr(self.tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", self.tok.pos)
        self.advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "eof":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            arg = self.unary()
            return Neg(arg) if op == "-" else arg
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            pos = self.advance().pos
            exponent = self.unary()
            if depends_on_variable(exponent):
                raise ExprSyntaxError("exponent must not depend on y", pos)
            return Pow(base, exponent)
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(tok)
            if tok.text in _ARITY:
                raise ExprSyntaxError(f"function {tok.text!r} needs arguments", tok.pos)
            return Var() if tok.text == VARIABLE else Param(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "eof":
            raise ExprSyntaxError("unexpected end of input", tok.pos)
        raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.pos)

    def call(self, name_tok: _Tok) -> Node:
        name = name_tok.text
        if name not in _ARITY:
            raise UnknownFunctionError(f"unknown function {name!r}", name_tok.pos)
        self.expect("(")
        args = [self.expr()]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if len(args) != _ARITY[name]:
            raise ExprSyntaxError(
                f"{name} takes {_ARITY[name]} argument(s), got {len(args)}", name_tok.pos
            )
        if name == "min":
            return Min(*args)
        if name == "max":
            return Max(*args)
        if name == "ifle":
            return IfLe(*args)
        return Call(name, args[0])


def parse(text: str) -> Node:
    """Parse ``text`` into an expression tree.

    Raises
    ------
    ExprSyntaxError
        With the 0-based character position of the offending token.
    UnknownFunctionError
        For calls to functions outside the supported set.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Inspection and printing
# ---------------------------------------------------------------------------


def _children(node: Node) -> tuple[Node, ...]:
    if isinstance(node, (Const, Var, Param)):
        return ()
    if isinstance(node, (Neg,)):
        return (node.arg,)
    if isinstance(node, Call):
        return (node.arg,)
    if isinstance(node, Pow):
        return (node.base, node.exponent)
    if isinstance(node, IfLe):
        return (node.a, node.b, node.then, node.other)
    return (node.left, node.right)


def depends_on_variable(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    return any(depends_on_variable(c) for c in _children(node))


def parameters(node: Node) -> set[str]:
    """Names of all parameters referenced by ``node``."""
    if isinstance(node, Param):
        return {node.name}
    out: set[str] = set()
    for c in _children(node):
        out |= parameters(c)
    return out


_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(node: Node) -> int:
    if isinstance(node, Const) and (node.value < 0 or math.copysign(1, node.value) < 0):
        return 0
    return _PREC.get(type(node), 5)


def _wrap(node: Node, min_prec: int) -> str:
    s = to_string(node)
    return f"({s})" if _prec(node) < min_prec else s


def to_string(node: Node) -> str:
    """Render ``node`` in the input grammar; ``parse(to_string(n))`` evaluates like ``n``."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return VARIABLE
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Neg):
        return "-" + _wrap(node.arg, 3)
    if isinstance(node, Add):
        return f"{_wrap(node.left, 1)} + {_wrap(node.right, 2)}"
    if isinstance(node, Sub):
        return f"{_wrap(node.left, 1)} - {_wrap(node.right, 2)}"
    if isinstance(node, Mul):
        return f"{_wrap(node.left, 2)}*{_wrap(node.right, 3)}"
    if isinstance(node, Div):
        return f"{_wrap(node.left, 2)}/{_wrap(node.right, 3)}"
    if isinstance(node, Pow):
        return f"{_wrap(node.base, 5)}^{_wrap(node.exponent, 3)}"
    if isinstance(node, Call):
        return f"{node.name}({to_string(node.arg)})"
    if isinstance(node, Min):
        return f"min({to_string(node.left)}, {to_string(node.right)})"
    if isinstance(node, Max):
        return f"max({to_string(node.left)}, {to_string(node.right)})"
    if isinstance(node, IfLe):
        args = ", ".join(to_string(c) for c in _children(node))
        return f"ifle({args})"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

Evaluator = Callable[[Union[float, np.ndarray]], Union[float, np.ndarray]]


def _domain_check(bad, strict: bool, message: str):
    if strict and np.any(bad):
        raise ExprDomainError(message)


def _compile(node: Node, params: Mapping[str, float], strict: bool) -> Evaluator:
    if isinstance(node, Const):
        v = float(node.value)
        return lambda y: v + 0.0 * y
    if isinstance(node, Var):
        return lambda y: y
    if isinstance(node, Param):
        if node.name not in params:
            raise UnboundParameterError(f"parameter {node.name!r} is not bound")
        v = float(params[node.name])
        return lambda y: v + 0.0 * y
    if isinstance(node, Neg):
        f = _compile(node.arg, params, strict)
        return lambda y: -f(y)
    if isinstance(node, (Add, Sub, Mul, Min, Max)):
        f = _compile(node.left, params, strict)
        g = _compile(node.right, params, strict)
        op = {
            Add: np.add,
            Sub: np.subtract,
            Mul: np.multiply,
            Min: np.minimum,
            Max: np.maximum,
        }[type(node)]
        return lambda y: op(f(y), g(y))
    if isinstance(node, Div):
        f = _compile(node.left, params, strict)
        g = _compile(node.right, params, strict)

        def div(y):
            den = g(y)
            _domain_check(den == 0, strict, "division by zero")
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(den == 0, np.nan, f(y) / np.where(den == 0, 1.0, den))

        return div
    if isinstance(node, Pow):
        f = _compile(node.base, params, strict)
        k = float(_compile(node.exponent, params, strict)(0.0))
        integral = float(k).is_integer()

        def power(y):
            b = f(y)
            bad = (b == 0) & (k < 0)
            if not integral:
                bad = bad | (b < 0)
            _domain_check(bad, strict, f"power {k!r} outside domain")
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                return np.where(bad, np.nan, np.power(np.where(bad, 1.0, b), k))

        return power
    if isinstance(node, Call):
        f = _compile(node.arg, params, strict)
        name = node.name
        if name == "log":

            def log(y):
                u = f(y)
                _domain_check(u <= 0, strict, "log of a non-positive value")
                with np.errstate(divide="ignore", invalid="ignore"):
                    return np.log(u)

            return log
        if name == "sqrt":

            def sqrt(y):
                u = f(y)
                _domain_check(u < 0, strict, "sqrt of a negative value")
                with np.errstate(invalid="ignore"):
                    return np.sqrt(u)

            return sqrt
        if name == "exp":

            def exp(y):
                with np.errstate(over="ignore"):
                    return np.exp(f(y))

            return exp
        fn = {"abs": np.abs, "sin": np.sin, "cos": np.cos}[name]
        return lambda y: fn(f(y))
    if isinstance(node, IfLe):
        a, b, c, d = (_compile(n, params, strict) for n in _children(node))
        return lambda y: np.where(a(y) <= b(y), c(y), d(y))
    raise TypeError(f"not an expression node: {node!r}")


def compile_expr(node: Node, params: Mapping[str, float] | None = None, strict: bool = True) -> Evaluator:
    """Bind parameters and return a function of ``y`` (float or ndarray).

    With ``strict=False`` domain violations give NaN instead of raising; the
    Monte Carlo code uses that mode so one bad path does not abort a batch.
    """
    f = _compile(node, params or {}, strict)

    def evaluator(y):
        scalar = np.ndim(y) == 0
        out = f(np.asarray(y, dtype=float) if not scalar else float(y))
        return float(out) if scalar else np.asarray(out, dtype=float)

    return evaluator


def evaluate(node: Node, y, params: Mapping[str, float] | None = None):
    """Evaluate ``node`` at ``y``.

    >>> evaluate(parse("p*y + q"), 1.0, {"p": 1.0, "q": 2.5})
    3.5
    """
    return compile_expr(node, params)(y)


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

ZERO = Const(0.0)
ONE = Const(1.0)


def _is(node: Node, value: float) -> bool:
    return isinstance(node, Const) and node.value == value


def _add(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(b, Neg):
        return _sub(a, b.arg)
    return Add(a, b)


def _sub(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return _neg(b)
    return Sub(a, b)


def _neg(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return _neg(b)
    if _is(b, -1.0):
        return _neg(a)
    return Mul(a, b)


def _div(a: Node, b: Node) -> Node:
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return Div(a, b)


def _pow(a: Node, k: Node) -> Node:
    if _is(k, 1.0):
        return a
    if _is(k, 0.0):
        return ONE
    return Pow(a, k)


def differentiate(node: Node) -> Node:
    """Symbolic derivative with respect to ``y``."""
    if isinstance(node, (Const, Param)):
        return ZERO
    if isinstance(node, Var):
        return ONE
    if isinstance(node, Neg):
        return _neg(differentiate(node.arg))
    if isinstance(node, Add):
        return _add(differentiate(node.left), differentiate(node.right))
    if isinstance(node, Sub):
        return _sub(differentiate(node.left), differentiate(node.right))
    if isinstance(node, Mul):
        u, v = node.left, node.right
        return _add(_mul(differentiate(u), v), _mul(u, differentiate(v)))
    if isinstance(node, Div):
        u, v = node.left, node.right
        du, dv = differentiate(u), differentiate(v)
        if _is(dv, 0.0):
            return _div(du, v)
        return _div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, Const(2.0)))
    if isinstance(node, Pow):
        k = node.exponent
        km1 = Const(k.value - 1.0) if isinstance(k, Const) else Sub(k, ONE)
        return _mul(_mul(k, _pow(node.base, km1)), differentiate(node.base))
    if isinstance(node, Call):
        u = node.arg
        du = differentiate(u)
        if _is(du, 0.0):
            return ZERO
        if node.name == "log":
            return _div(du, u)
        if node.name == "sqrt":
            return _div(du, _mul(Const(2.0), node))
        outer = {
            "exp": lambda: node,
            # abs'(0) = 1
            "abs": lambda: IfLe(ZERO, u, ONE, Const(-1.0)),
            "sin": lambda: Call("cos", u),
            "cos": lambda: _neg(Call("sin", u)),
        }[node.name]()
        return _mul(outer, du)
    if isinstance(node, Min):
        # first argument wins ties
        return _select(node.left, node.right, differentiate(node.left), differentiate(node.right))
    if isinstance(node, Max):
        return _select(node.right, node.left, differentiate(node.left), differentiate(node.right))
    if isinstance(node, IfLe):
        return _select(node.a, node.b, differentiate(node.then), differentiate(node.other))
    raise TypeError(f"not an expression node: {node!r}")


def _select(a: Node, b: Node, then: Node, other: Node) -> Node:
    if then == other:
        return then
    return IfLe(a, b, then, other)
