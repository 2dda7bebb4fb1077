"""Scalar field expressions: parsing, evaluation and symbolic differentiation.

Grammar (standard precedence, left-associative within a level)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' intexp)*
    intexp := ['-' | '+'] INT | '(' ['-' | '+'] INT ')'
    atom   := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-x1^2`` is ``-(x1^2)``.  Identifiers
``x1, x2, ...`` are coordinates, ``t`` is time, ``pi`` is a constant and every
other identifier is a named parameter.  Functions: sin, cos, exp, abs, sqrt
and sgn (sgn is undefined at zero, it appears in derivatives of abs).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = [
    "FieldExpr",
    "FieldExprError",
    "FieldSyntaxError",
    "UnknownIdentifierError",
    "FieldEvalError",
    "UnboundParameterError",
    "FieldDomainError",
    "NonSmoothError",
    "parse_field",
    "eval_field",
    "diff_param",
    "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "abs", "sqrt", "sgn")
MAX_DEPTH = 256
MAX_NESTING = 100


class FieldExprError(ValueError):
    pass


class FieldSyntaxError(FieldExprError):
    """Malformed expression; ``offset`` is a byte offset into the UTF-8 source."""

    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        text = f"{message} at offset {offset}"
        if expected:
            text += f" (expected {expected})"
        super().__init__(text)


class UnknownIdentifierError(FieldSyntaxError):
    pass


class FieldEvalError(FieldExprError):
    pass


class UnboundParameterError(FieldEvalError):
    pass


class FieldDomainError(FieldEvalError):
    pass


class NonSmoothError(FieldDomainError):
    pass


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Coord:
    index: int


@dataclass(frozen=True)
class Time:
    pass


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exp: int


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Coord, Time, Param, Neg, Bin, Pow, Call]

_ZERO = Num(0.0)
_ONE = Num(1.0)


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)
_COORD_RE = re.compile(r"x([1-9]\d*)$")


@dataclass
class _Tok:
    kind: str  # num | ident | op | eof
    text: str
    pos: int  # character offset


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise FieldSyntaxError(
                f"unexpected character {source[pos]!r}",
                _byte_offset(source, pos),
                "number, identifier, operator or parenthesis",
            )
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", n))
    return toks


def _byte_offset(source: str, pos: int) -> int:
    return len(source[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, source: str, params: frozenset[str] | None):
        self.source = source
        self.toks = _tokenize(source)
        self.i = 0
        self.params = params
        self.depth: dict[int, int] = {}
        self.nesting = 0
        self._keep: list[Node] = []

    # helpers
    def peek(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok: _Tok, expected: str | None = None, cls=FieldSyntaxError):
        raise cls(message, _byte_offset(self.source, tok.pos), expected)

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if tok.text != text or tok.kind != "op":
            got = "end of input" if tok.kind == "eof" else repr(tok.text)
            self.error(f"unexpected {got}", tok, repr(text))
        return self.advance()

    def node(self, node: Node, tok: _Tok, *children: Node) -> Node:
        d = 1 + max((self.depth.get(id(c), 1) for c in children), default=0)
        if d > MAX_DEPTH:
            self.error("expression nested too deeply", tok)
        self.depth[id(node)] = d
        # keep nodes alive so id() stays unique while parsing
        self._keep.append(node)
        return node

    def enter(self, tok: _Tok):
        self.nesting += 1
        if self.nesting > MAX_NESTING:
            self.error("parentheses nested too deeply", tok)

    # grammar
    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "eof":
            self.error(f"unexpected {tok.text!r}", tok, "operator or end of input")
        return node

    def expr(self) -> Node:
        left = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            tok = self.advance()
            right = self.term()
            left = self.node(Bin(tok.text, left, right), tok, left, right)
        return left

    def term(self) -> Node:
        left = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            tok = self.advance()
            right = self.unary()
            left = self.node(Bin(tok.text, left, right), tok, left, right)
        return left

    def unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text in "+-":
            # iterative to keep long sign runs off the call stack
            signs = []
            while self.peek().kind == "op" and self.peek().text in "+-":
                signs.append(self.advance())
            node = self.power()
            for s in reversed(signs):
                if s.text == "-":
                    node = self.node(Neg(node), s, node)
            return node
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        while self.peek().kind == "op" and self.peek().text == "^":
            tok = self.advance()
            exp = self.int_exponent()
            base = self.node(Pow(base, exp), tok, base)
        return base

    def int_exponent(self) -> int:
        paren = False
        if self.peek().kind == "op" and self.peek().text == "(":
            self.advance()
            paren = True
        sign = 1
        if self.peek().kind == "op" and self.peek().text in "+-":
            sign = -1 if self.advance().text == "-" else 1
        tok = self.peek()
        if tok.kind != "num" or not tok.text.isdigit():
            self.error("integer exponent required", tok, "integer literal")
        self.advance()
        if paren:
            self.expect(")")
        return sign * int(tok.text)

    def atom(self) -> Node:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return self.node(Num(float(tok.text)), tok)
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if self.peek().kind == "op" and self.peek().text == "(":
                if name not in FUNCTIONS:
                    self.error(f"unknown function {name!r}", tok, cls=UnknownIdentifierError)
                self.enter(self.advance())
                arg = self.expr()
                self.expect(")")
                self.nesting -= 1
                return self.node(Call(name, arg), tok, arg)
            if name in FUNCTIONS:
                self.error(f"function {name!r} needs an argument", self.peek(), "'('")
            if name == "t":
                return self.node(Time(), tok)
            if name == "pi":
                return self.node(Num(math.pi), tok)
            m = _COORD_RE.match(name)
            if m:
                return self.node(Coord(int(m.group(1))), tok)
            if self.params is not None and name not in self.params:
                self.error(f"unknown identifier {name!r}", tok, cls=UnknownIdentifierError)
            return self.node(Param(name), tok)
        if tok.kind == "op" and tok.text == "(":
            self.enter(self.advance())
            inner = self.expr()
            self.expect(")")
            self.nesting -= 1
            return inner
        got = "end of input" if tok.kind == "eof" else repr(tok.text)
        self.error(f"unexpected {got}", tok, "number, identifier or '('")


# ---------------------------------------------------------------------------
# serialization

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node: Node) -> int:
    if isinstance(node, Bin):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    return 5


def _fmt_num(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def to_source(node: Node) -> str:
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Coord):
        return f"x{node.index}"
    if isinstance(node, Time):
        return "t"
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.arg)
        if _prec(node.arg) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Pow):
        base = to_source(node.base)
        if _prec(node.base) < 4:
            base = f"({base})"
        return f"{base}^{node.exp}"
    p = _PREC[node.op]
    left = to_source(node.left)
    right = to_source(node.right)
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left}{node.op}{right}" if p == 2 else f"{left} {node.op} {right}"


# ---------------------------------------------------------------------------
# evaluation

def _eval(node: Node, coords, t, params):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Coord):
        return coords[node.index - 1]
    if isinstance(node, Time):
        if t is None:
            raise FieldEvalError("expression uses time t but no time was given")
        return t
    if isinstance(node, Param):
        try:
            return params[node.name]
        except KeyError:
            raise UnboundParameterError(f"parameter {node.name!r} is not bound") from None
    if isinstance(node, Neg):
        return -_eval(node.arg, coords, t, params)
    if isinstance(node, Pow):
        base = _eval(node.base, coords, t, params)
        if node.exp < 0 and np.any(np.asarray(base) == 0):
            raise FieldDomainError("division by zero in negative power")
        return base ** float(node.exp) if node.exp < 0 else base ** node.exp
    if isinstance(node, Call):
        arg = _eval(node.arg, coords, t, params)
        fn = node.fn
        if fn == "sqrt":
            if np.any(np.asarray(arg) < 0):
                raise FieldDomainError("sqrt of a negative value")
            return np.sqrt(arg)
        if fn == "sgn":
            if np.any(np.asarray(arg) == 0):
                raise NonSmoothError("derivative of abs evaluated where its argument is zero")
            return np.sign(arg)
        return _UFUNCS[fn](arg)
    a = _eval(node.left, coords, t, params)
    b = _eval(node.right, coords, t, params)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if np.any(np.asarray(b) == 0):
        raise FieldDomainError("division by zero")
    return a / b


_UFUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}


# ---------------------------------------------------------------------------
# differentiation with light constant folding

def _num(v: float) -> Node:
    return Num(float(v)) if v >= 0 else Neg(Num(float(-v)))


def _const(node: Node) -> float | None:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg) and isinstance(node.arg, Num):
        return -node.arg.value
    return None


def _neg(a: Node) -> Node:
    c = _const(a)
    if c is not None:
        return _num(-c)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _add(a: Node, b: Node) -> Node:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return _num(ca + cb)
    if ca == 0:
        return b
    if cb == 0:
        return a
    if isinstance(b, Neg):
        return Bin("-", a, b.arg)
    return Bin("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return _num(ca - cb)
    if cb == 0:
        return a
    if ca == 0:
        return _neg(b)
    return Bin("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return _num(ca * cb)
    if ca == 0 or cb == 0:
        return _ZERO
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca == -1:
        return _neg(b)
    if cb == -1:
        return _neg(a)
    if isinstance(a, Neg) and _const(a) is None:
        return _neg(_mul(a.arg, b))
    return Bin("*", a, b)


def _div(a: Node, b: Node) -> Node:
    ca, cb = _const(a), _const(b)
    if ca == 0:
        return _ZERO
    if cb == 1:
        return a
    return Bin("/", a, b)


def _pow(a: Node, n: int) -> Node:
    if n == 0:
        return _ONE
    if n == 1:
        return a
    return Pow(a, n)


def _diff(node: Node, wrt) -> Node:
    if isinstance(node, Num):
        return _ZERO
    if isinstance(node, (Coord, Time, Param)):
        return _ONE if node == wrt else _ZERO
    if isinstance(node, Neg):
        return _neg(_diff(node.arg, wrt))
    if isinstance(node, Pow):
        du = _diff(node.base, wrt)
        if _const(du) == 0:
            return _ZERO
        return _mul(_mul(_num(node.exp), _pow(node.base, node.exp - 1)), du)
    if isinstance(node, Call):
        u = node.arg
        du = _diff(u, wrt)
        if _const(du) == 0:
            return _ZERO
        fn = node.fn
        if fn == "sin":
            outer = Call("cos", u)
        elif fn == "cos":
            outer = _neg(Call("sin", u))
        elif fn == "exp":
            outer = node
        elif fn == "sqrt":
            return _div(du, _mul(Num(2.0), node))
        elif fn == "abs":
            outer = Call("sgn", u)
        else:  # sgn: zero almost everywhere
            return _ZERO
        return _mul(outer, du)
    u, v = node.left, node.right
    du, dv = _diff(u, wrt), _diff(v, wrt)
    if node.op == "+":
        return _add(du, dv)
    if node.op == "-":
        return _sub(du, dv)
    if node.op == "*":
        return _add(_mul(du, v), _mul(u, dv))
    return _div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, 2))


# ---------------------------------------------------------------------------
# public type

def _walk(node: Node):
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, (Neg, Call)):
            stack.append(n.arg)
        elif isinstance(n, Pow):
            stack.append(n.base)
        elif isinstance(n, Bin):
            stack.append(n.left)
            stack.append(n.right)


class FieldExpr:
    """Immutable parsed expression ``f(x, t; params)``."""

    __slots__ = ("ast", "free_params", "dimension", "uses_time")

    def __init__(self, ast: Node):
        object.__setattr__(self, "ast", ast)
        params, dim, time = set(), 0, False
        for n in _walk(ast):
            if isinstance(n, Param):
                params.add(n.name)
            elif isinstance(n, Coord):
                dim = max(dim, n.index)
            elif isinstance(n, Time):
                time = True
        object.__setattr__(self, "free_params", frozenset(params))
        object.__setattr__(self, "dimension", dim)
        object.__setattr__(self, "uses_time", time)

    def __setattr__(self, key, value):
        raise AttributeError("FieldExpr is immutable")

    def __str__(self) -> str:
        return to_source(self.ast)

    def __repr__(self) -> str:
        return f"FieldExpr({str(self)!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, FieldExpr) and self.ast == other.ast

    def __hash__(self) -> int:
        return hash(self.ast)

    @property
    def is_zero(self) -> bool:
        return _const(self.ast) == 0

    def evaluate(self, point, time=None, params: Mapping[str, float] | None = None):
        """Evaluate at ``point`` (shape ``(d,)`` or ``(N, d)``) and ``time``.

        Vectorized over a leading sample axis.  Raises :class:`FieldDomainError`
        instead of returning inf/nan.
        """
        params = params or {}
        missing = self.free_params - set(params)
        if missing:
            raise UnboundParameterError(f"unbound parameters: {sorted(missing)}")
        pts = np.asarray(point, dtype=float)
        if pts.ndim == 0:
            pts = pts.reshape(1)
        d = pts.shape[-1] if pts.ndim else 0
        if d < self.dimension:
            raise FieldEvalError(
                f"point has dimension {d} but expression uses x{self.dimension}"
            )
        coords = [pts[..., i] for i in range(d)]
        t = None if time is None else np.asarray(time, dtype=float)
        with np.errstate(all="ignore"):
            value = _eval(self.ast, coords, t, params)
        shape = np.broadcast_shapes(pts.shape[:-1], () if t is None else t.shape)
        value = np.broadcast_to(np.asarray(value, dtype=float), shape)
        if not np.all(np.isfinite(value)):
            raise FieldDomainError("evaluation produced a non-finite value")
        return float(value) if value.ndim == 0 else np.array(value)

    def diff(self, name: str) -> "FieldExpr":
        """Symbolic derivative with respect to a parameter, ``t`` or ``x<i>``."""
        if name == "t":
            wrt = Time()
        elif _COORD_RE.match(name):
            wrt = Coord(int(name[1:]))
        else:
            wrt = Param(name)
        return FieldExpr(_diff(self.ast, wrt))


def parse_field(source: str, params: Iterable[str] | None = None) -> FieldExpr:
    """Parse ``source``.  If ``params`` is given, other names are rejected."""
    if isinstance(source, FieldExpr):
        return source
    allowed = None if params is None else frozenset(params)
    return FieldExpr(_Parser(source, allowed).parse())


def eval_field(expr: FieldExpr, point, time: float = 0.0, params: Mapping[str, float] | None = None):
    return expr.evaluate(point, time, params)


def diff_param(expr: FieldExpr, param: str) -> FieldExpr:
    if param not in expr.free_params:
        return FieldExpr(_ZERO)
    return expr.diff(param)
