"""Scalar expressions in the decision variables x1..xn.

Expressions are parsed into immutable trees, evaluated in IEEE double
precision and differentiated exactly with forward-mode dual numbers.  An
optional integer index symbol (``i`` by default) and named coefficient
symbols may appear; both are substituted by constants before a family
member is differentiated.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := number | ident | ident '(' expr ')' | '(' expr ')'

``^`` binds tighter than unary minus, so ``-x1^2`` is ``-(x1^2)`` and
``a^b^c`` is ``a^(b^c)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    """Syntax or name error; ``offset`` is a byte offset into the source."""

    def __init__(self, message, offset=None, source=None):
        self.offset = offset
        self.source = source
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")
        self.message = message


class EvaluationError(ExprError):
    """Domain error while evaluating or differentiating a node."""

    def __init__(self, message, node=None):
        self.node = node
        self.offset = getattr(node, "pos", None)
        where = ""
        if node is not None:
            where = f" in '{to_source(node)}'"
            if self.offset is not None:
                where += f" (byte {self.offset})"
        super().__init__(f"{message}{where}")


# -- tree -------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    pos: int | None = field(default=None, compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    index: int  # 1-based


@dataclass(frozen=True)
class Index(Node):
    name: str


@dataclass(frozen=True)
class Sym(Node):
    """Named coefficient, bound through ``env`` or by substitution."""

    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str  # one of + - * / ^
    left: Node
    right: Node

    def __post_init__(self):
        if self.op == "^":
            object.__setattr__(self, "_const_exp", is_constant(self.right))


@dataclass(frozen=True)
class Call(Node):
    fn: str
    arg: Node


Expression = Node


def variables(e):
    """Set of 1-based variable indices referenced by ``e``."""
    out = set()
    for node in walk(e):
        if isinstance(node, Var):
            out.add(node.index)
    return out


def walk(e):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Neg):
            stack.append(node.arg)
        elif isinstance(node, Call):
            stack.append(node.arg)
        elif isinstance(node, BinOp):
            stack.append(node.right)
            stack.append(node.left)


def has_index(e):
    return any(isinstance(node, Index) for node in walk(e))


def symbols(e):
    return {node.name for node in walk(e) if isinstance(node, Sym)}


def is_constant(e):
    return not any(isinstance(node, Var) for node in walk(e))


def substitute(e, index=None, env=None):
    """Replace the index symbol by ``index`` and symbols by ``env`` entries.

    ``env`` values may be numbers or expressions; expressions are inserted
    as subtrees (and have the index substituted as well).
    """
    env = env or {}

    def sub(node):
        if isinstance(node, Index):
            if index is None:
                return node
            return Const(float(index), pos=node.pos)
        if isinstance(node, Sym):
            if node.name not in env:
                return node
            value = env[node.name]
            if isinstance(value, Node):
                return sub(value)
            return Const(float(value), pos=node.pos)
        if isinstance(node, Neg):
            return Neg(sub(node.arg), pos=node.pos)
        if isinstance(node, Call):
            return Call(node.fn, sub(node.arg), pos=node.pos)
        if isinstance(node, BinOp):
            return BinOp(node.op, sub(node.left), sub(node.right), pos=node.pos)
        return node

    return sub(e)


# -- parser -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)
_VAR = re.compile(r"x([0-9]+)$")


class _Parser:
    def __init__(self, source, n, index_symbol, names):
        self.source = source
        self.n = n
        self.index_symbol = index_symbol
        self.names = set(names)
        self.tokens = self._tokenize(source)
        self.k = 0

    def _offset(self, char_pos):
        return len(self.source[:char_pos].encode("utf-8"))

    def error(self, message, char_pos):
        raise ParseError(message, self._offset(char_pos), self.source)

    def _tokenize(self, source):
        tokens = []
        pos = 0
        while True:
            while pos < len(source) and source[pos].isspace():
                pos += 1
            if pos >= len(source):
                break
            m = _TOKEN.match(source, pos)
            if m is None or m.end() == pos:
                self.error(f"unexpected character {source[pos]!r}", pos)
            kind = m.lastgroup
            start = m.start(kind)
            tokens.append((kind, m.group(kind), start))
            pos = m.end()
        tokens.append(("end", "", len(source)))
        return tokens

    def peek(self):
        return self.tokens[self.k]

    def take(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value:
            found = "end of input" if kind == "end" else repr(text)
            self.error(f"expected {value!r}, found {found}", pos)

    def parse(self):
        if self.peek()[0] == "end":
            self.error("empty expression", 0)
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            self.error(f"unexpected token {text!r}", pos)
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, pos = self.take()
            left = BinOp(op, left, self.term(), pos=self._offset(pos))
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.take()
            left = BinOp(op, left, self.unary(), pos=self._offset(pos))
        return left

    def unary(self):
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary(), pos=self._offset(pos))
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return BinOp("^", base, self.unary(), pos=self._offset(pos))
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                self.error(f"number {text} is not finite", pos)
            return Const(value, pos=self._offset(pos))
        if kind == "id":
            return self.ident(text, pos)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(text)
        self.error(f"unexpected {found}", pos)

    def ident(self, name, pos):
        call = self.peek()[1] == "(" and self.peek()[0] == "op"
        if name in FUNCTIONS:
            if not call:
                self.error(f"arity mismatch: {name} takes one argument", pos)
            self.take()
            arg = self.expr()
            if self.peek()[1] == ",":
                self.error(f"arity mismatch: {name} takes one argument", self.peek()[2])
            self.expect(")")
            return Call(name, arg, pos=self._offset(pos))
        if call:
            self.error(f"unknown function {name!r}", pos)
        m = _VAR.match(name)
        if m:
            k = int(m.group(1))
            if k < 1 or (self.n is not None and k > self.n):
                limit = f"x1..x{self.n}" if self.n is not None else "x1.."
                self.error(f"unknown identifier {name!r} (variables are {limit})", pos)
            return Var(k, pos=self._offset(pos))
        if self.index_symbol is not None and name == self.index_symbol:
            return Index(name, pos=self._offset(pos))
        if name in self.names:
            return Sym(name, pos=self._offset(pos))
        self.error(f"unknown identifier {name!r}", pos)


def parse(source, n=None, index_symbol=None, names=()):
    """Parse ``source`` into an expression tree.

    ``n`` bounds the variable references, ``index_symbol`` names the integer
    family index and ``names`` lists additional coefficient symbols.
    """
    return _Parser(source, n, index_symbol, names).parse()


# -- printing ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node):
    if isinstance(node, BinOp):
        return 4 if node.op == "^" else _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Const) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return 3
    return 5


def to_source(e):
    """Print ``e`` so that :func:`parse` rebuilds the same tree."""
    if isinstance(e, Const):
        if e.value < 0 or math.copysign(1.0, e.value) < 0:
            return "-" + repr(-e.value)
        return repr(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, (Index, Sym)):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_source(e.arg)})"
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        return "-" + (inner if _prec(e.arg) >= 3 else f"({inner})")
    p = _prec(e)
    left, right = to_source(e.left), to_source(e.right)
    if e.op == "^":
        if _prec(e.left) < 5:
            left = f"({left})"
        if _prec(e.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# -- evaluation -------------------------------------------------------------


def _check(value, node):
    if not math.isfinite(value):
        raise EvaluationError("non-finite value", node)
    return value


def _value(node, x, index, env):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(x[node.index - 1])
    if isinstance(node, BinOp):
        a = _value(node.left, x, index, env)
        b = _value(node.right, x, index, env)
        op = node.op
        if op == "+":
            return _check(a + b, node)
        if op == "-":
            return _check(a - b, node)
        if op == "*":
            return _check(a * b, node)
        if op == "/":
            if b == 0.0:
                raise EvaluationError("division by zero", node)
            return _check(a / b, node)
        return _check(_pow(a, b, node), node)
    if isinstance(node, Neg):
        return -_value(node.arg, x, index, env)
    if isinstance(node, Call):
        return _check(_call(node.fn, _value(node.arg, x, index, env), node), node)
    if isinstance(node, Index):
        if index is None:
            raise EvaluationError(f"index {node.name} requires a value", node)
        return float(index)
    if isinstance(node, Sym):
        if node.name not in env:
            raise EvaluationError(f"unbound symbol {node.name}", node)
        return float(env[node.name])
    raise TypeError(f"not an expression node: {node!r}")


def _pow(a, b, node):
    if node._const_exp:
        if a < 0.0 and b != math.floor(b):
            raise EvaluationError("negative base with non-integer exponent", node)
        if a == 0.0 and b < 0.0:
            raise EvaluationError("division by zero", node)
    elif a <= 0.0:
        raise EvaluationError("variable exponent requires a positive base", node)
    try:
        return a**b
    except OverflowError:
        raise EvaluationError("overflow", node) from None


def _call(fn, u, node):
    try:
        if fn == "sin":
            return math.sin(u)
        if fn == "cos":
            return math.cos(u)
        if fn == "exp":
            return math.exp(u)
        if fn == "log":
            if u <= 0.0:
                raise EvaluationError("log of a non-positive number", node)
            return math.log(u)
        if fn == "sqrt":
            if u < 0.0:
                raise EvaluationError("sqrt of a negative number", node)
            return math.sqrt(u)
        if fn == "abs":
            return abs(u)
    except OverflowError:
        raise EvaluationError("overflow", node) from None
    raise EvaluationError(f"unknown function {fn}", node)


def evaluate(e, x, i=None, env=None):
    """Value of ``e`` at the point ``x`` (and family index ``i``)."""
    return _value(e, x, i, env or {})


# Forward mode: every node yields (value, tangent) where the tangent is an
# ndarray of partials or None for constants.


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _scale(s, a):
    return None if a is None else s * a


def _dual(node, x, index, env, n):
    if isinstance(node, Const):
        return node.value, None
    if isinstance(node, Var):
        dot = np.zeros(n)
        dot[node.index - 1] = 1.0
        return float(x[node.index - 1]), dot
    if isinstance(node, BinOp):
        a, da = _dual(node.left, x, index, env, n)
        b, db = _dual(node.right, x, index, env, n)
        op = node.op
        if op == "+":
            return _check(a + b, node), _add(da, db)
        if op == "-":
            return _check(a - b, node), _add(da, _scale(-1.0, db))
        if op == "*":
            return _check(a * b, node), _add(_scale(b, da), _scale(a, db))
        if op == "/":
            if b == 0.0:
                raise EvaluationError("division by zero", node)
            v = _check(a / b, node)
            return v, _add(_scale(1.0 / b, da), _scale(-v / b, db))
        v = _check(_pow(a, b, node), node)
        if db is None:
            if da is None or b == 0.0:
                return v, None
            if a == 0.0 and b < 1.0:
                raise EvaluationError("power is not differentiable at a zero base", node)
            return v, _scale(_check(b * a ** (b - 1.0), node), da)
        # a > 0 is guaranteed by _pow for variable exponents
        dv = _scale(v * math.log(a), db)
        if da is not None:
            dv = _add(dv, _scale(v * b / a, da))
        return v, dv
    if isinstance(node, Neg):
        a, da = _dual(node.arg, x, index, env, n)
        return -a, _scale(-1.0, da)
    if isinstance(node, Call):
        u, du = _dual(node.arg, x, index, env, n)
        v = _check(_call(node.fn, u, node), node)
        if du is None:
            return v, None
        fn = node.fn
        if fn == "sin":
            d = math.cos(u)
        elif fn == "cos":
            d = -math.sin(u)
        elif fn == "exp":
            d = v
        elif fn == "log":
            d = 1.0 / u
        elif fn == "sqrt":
            if u == 0.0:
                raise EvaluationError("sqrt is not differentiable at 0", node)
            d = 0.5 / v
        else:
            if u == 0.0:
                raise EvaluationError("abs is not differentiable at 0", node)
            d = 1.0 if u > 0.0 else -1.0
        return v, _scale(d, du)
    if isinstance(node, (Index, Sym)):
        return _value(node, x, index, env), None
    raise TypeError(f"not an expression node: {node!r}")


def value_and_gradient(e, x, i=None, env=None):
    n = len(x)
    v, dot = _dual(e, x, i, env or {}, n)
    if dot is None:
        dot = np.zeros(n)
    return v, _check_grad(dot, e)


def _check_grad(dot, e):
    if not np.all(np.isfinite(dot)):
        raise EvaluationError("non-finite derivative", e)
    return dot


def gradient(e, x, i=None, env=None):
    """Exact gradient of ``e`` at ``x`` as an array of ``len(x)`` partials."""
    return value_and_gradient(e, x, i, env)[1]
