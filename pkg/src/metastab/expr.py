"""Closed-form expression trees with second-order forward differentiation.

The grammar covers `+ - * / ^`, unary minus, parentheses, decimal literals,
function calls (exp, log, sin, cos, sqrt) and the variables ``x1..xd`` or the
radial symbol ``r``.  Derivatives are propagated as truncated Taylor jets
(value, gradient, Hessian), so they are exact to rounding without any
symbolic simplification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ExprSyntaxError(ValueError):
    """Raised on malformed input; carries the offending position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownIdentifierError(ValueError):
    def __init__(self, name, position):
        super().__init__(f"unknown identifier {name!r} (at position {position})")
        self.name = name
        self.position = position


class DomainError(ArithmeticError):
    """Elementary function evaluated outside its domain (log/sqrt/pow)."""


class Jet:
    """Second-order Taylor data (value, gradient, Hessian) at a point.

    Arithmetic on jets implements the chain rule through second order, so
    evaluating an expression tree on seed jets yields the exact value,
    gradient and (symmetric) Hessian of the expression.
    """

    __slots__ = ("v", "g", "h")

    def __init__(self, v, g, h):
        self.v = float(v)
        self.g = np.asarray(g, dtype=float)
        self.h = np.asarray(h, dtype=float)

    @staticmethod
    def constant(value, d):
        return Jet(value, np.zeros(d), np.zeros((d, d)))

    @staticmethod
    def variable(value, index, d):
        g = np.zeros(d)
        g[index] = 1.0
        return Jet(value, g, np.zeros((d, d)))

    def __add__(self, o):
        return Jet(self.v + o.v, self.g + o.g, self.h + o.h)

    def __sub__(self, o):
        return Jet(self.v - o.v, self.g - o.g, self.h - o.h)

    def __neg__(self):
        return Jet(-self.v, -self.g, -self.h)

    def __mul__(self, o):
        outer = np.outer(self.g, o.g)
        return Jet(
            self.v * o.v,
            self.v * o.g + o.v * self.g,
            self.v * o.h + o.v * self.h + outer + outer.T,
        )

    def __truediv__(self, o):
        if o.v == 0.0:
            raise DomainError("division by zero")
        return self * o._reciprocal()

    def _reciprocal(self):
        iv = 1.0 / self.v
        g = -self.g * iv * iv
        outer = np.outer(self.g, self.g)
        h = (2.0 * iv**3) * outer - iv * iv * self.h
        return Jet(iv, g, h)

    def compose(self, f0, f1, f2):
        """Chain rule for a scalar function with derivatives f1, f2 at self.v."""
        outer = np.outer(self.g, self.g)
        return Jet(f0, f1 * self.g, f1 * self.h + f2 * outer)


def _jet_pow_int(x: Jet, n: int) -> Jet:
    if n == 0:
        return Jet.constant(1.0, x.g.shape[0])
    if n < 0:
        if x.v == 0.0:
            raise DomainError("zero raised to a negative power")
        return _jet_pow_int(x, -n)._reciprocal()
    v = x.v
    f0 = v**n
    f1 = n * v ** (n - 1)
    f2 = n * (n - 1) * v ** (n - 2) if n >= 2 else 0.0
    return x.compose(f0, f1, f2)


_FUNCTIONS = {
    "exp": lambda v: (math.exp(v), math.exp(v), math.exp(v)),
    "sin": lambda v: (math.sin(v), math.cos(v), -math.sin(v)),
    "cos": lambda v: (math.cos(v), -math.sin(v), -math.cos(v)),
}


def _jet_call(name: str, x: Jet) -> Jet:
    if name in _FUNCTIONS:
        return x.compose(*_FUNCTIONS[name](x.v))
    if name == "log":
        if x.v <= 0.0:
            raise DomainError("log of non-positive value")
        return x.compose(math.log(x.v), 1.0 / x.v, -1.0 / x.v**2)
    if name == "sqrt":
        if x.v < 0.0:
            raise DomainError("sqrt of negative value")
        if x.v == 0.0:
            raise DomainError("sqrt differentiated at zero")
        s = math.sqrt(x.v)
        return x.compose(s, 0.5 / s, -0.25 / (s * x.v))
    raise AssertionError(name)


# ---------------------------------------------------------------------------
# Expression nodes


@dataclass(frozen=True)
class Node:
    def eval_jet(self, seeds: list[Jet]) -> Jet:
        raise NotImplementedError

    def eval_array(self, cols: list[np.ndarray]) -> np.ndarray:
        """Vectorized value-only evaluation; cols[i] holds x_{i+1} samples."""
        raise NotImplementedError

    def eval_vg(self, cols: list[np.ndarray]):
        """Vectorized value and gradient: (values, [d/dx_i arrays])."""
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Node):
    value: float

    def eval_jet(self, seeds):
        return Jet.constant(self.value, seeds[0].g.shape[0])

    def eval_array(self, cols):
        return np.full_like(cols[0], self.value)

    def eval_vg(self, cols):
        zero = np.zeros_like(cols[0])
        return np.full_like(cols[0], self.value), [zero] * len(cols)


@dataclass(frozen=True)
class Var(Node):
    index: int  # 0-based; the radial symbol is stored as index -1

    def eval_jet(self, seeds):
        return seeds[self.index]

    def eval_array(self, cols):
        return cols[self.index]

    def eval_vg(self, cols):
        k = self.index % len(cols)
        grads = [np.ones_like(cols[0]) if i == k else np.zeros_like(cols[0])
                 for i in range(len(cols))]
        return cols[self.index], grads


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def eval_jet(self, seeds):
        return -self.arg.eval_jet(seeds)

    def eval_array(self, cols):
        return -self.arg.eval_array(cols)

    def eval_vg(self, cols):
        v, g = self.arg.eval_vg(cols)
        return -v, [-gi for gi in g]


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    lhs: Node
    rhs: Node

    def eval_jet(self, seeds):
        a = self.lhs.eval_jet(seeds)
        b = self.rhs.eval_jet(seeds)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a / b

    def eval_array(self, cols):
        a = self.lhs.eval_array(cols)
        b = self.rhs.eval_array(cols)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        with np.errstate(divide="raise", invalid="raise"):
            return a / b

    def eval_vg(self, cols):
        a, ga = self.lhs.eval_vg(cols)
        b, gb = self.rhs.eval_vg(cols)
        if self.op == "+":
            return a + b, [x + y for x, y in zip(ga, gb)]
        if self.op == "-":
            return a - b, [x - y for x, y in zip(ga, gb)]
        if self.op == "*":
            return a * b, [x * b + a * y for x, y in zip(ga, gb)]
        with np.errstate(divide="raise", invalid="raise"):
            inv = 1.0 / b
        v = a * inv
        return v, [(x - v * y) * inv for x, y in zip(ga, gb)]


@dataclass(frozen=True)
class PowInt(Node):
    base: Node
    exponent: int

    def eval_jet(self, seeds):
        return _jet_pow_int(self.base.eval_jet(seeds), self.exponent)

    def eval_array(self, cols):
        return self.base.eval_array(cols) ** self.exponent

    def eval_vg(self, cols):
        a, ga = self.base.eval_vg(cols)
        n = self.exponent
        if n == 0:
            zero = np.zeros_like(a)
            return np.ones_like(a), [zero] * len(cols)
        chain = n * a ** (n - 1)
        return a ** n, [chain * x for x in ga]


@dataclass(frozen=True)
class Call(Node):
    name: str
    arg: Node

    def eval_jet(self, seeds):
        return _jet_call(self.name, self.arg.eval_jet(seeds))

    def eval_array(self, cols):
        a = self.arg.eval_array(cols)
        if self.name == "exp":
            return np.exp(a)
        if self.name == "sin":
            return np.sin(a)
        if self.name == "cos":
            return np.cos(a)
        if self.name == "log":
            if np.any(a <= 0.0):
                raise DomainError("log of non-positive value")
            return np.log(a)
        if self.name == "sqrt":
            if np.any(a < 0.0):
                raise DomainError("sqrt of negative value")
            return np.sqrt(a)
        raise AssertionError(self.name)

    def eval_vg(self, cols):
        a, ga = self.arg.eval_vg(cols)
        if self.name == "exp":
            v = np.exp(a)
            chain = v
        elif self.name == "sin":
            v, chain = np.sin(a), np.cos(a)
        elif self.name == "cos":
            v, chain = np.cos(a), -np.sin(a)
        elif self.name == "log":
            if np.any(a <= 0.0):
                raise DomainError("log of non-positive value")
            v, chain = np.log(a), 1.0 / a
        elif self.name == "sqrt":
            if np.any(a <= 0.0):
                raise DomainError("sqrt gradient at non-positive value")
            v = np.sqrt(a)
            chain = 0.5 / v
        else:
            raise AssertionError(self.name)
        return v, [chain * x for x in ga]


_FUNCTION_NAMES = {"exp", "log", "sin", "cos", "sqrt"}


# ---------------------------------------------------------------------------
# Tokenizer / recursive-descent parser


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                seen_dot = seen_dot or text[j] == "."
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
            try:
                value = float(text[i:j])
            except ValueError:
                raise ExprSyntaxError(f"bad numeric literal {text[i:j]!r}", i)
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, text, dim):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.dim = dim
        self.uses_r = False
        self.uses_x = False

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {kind!r}, got {tok[1]!r}", tok[2])
        return tok

    def parse(self):
        node = self.parse_sum()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def parse_sum(self):
        node = self.parse_product()
        while self.peek()[0] in ("+", "-"):
            op = self.next()[0]
            rhs = self.parse_product()
            node = BinOp(op, node, rhs)
        return node

    def parse_product(self):
        node = self.parse_unary()
        while self.peek()[0] in ("*", "/"):
            op = self.next()[0]
            rhs = self.parse_unary()
            node = BinOp(op, node, rhs)
        return node

    def parse_unary(self):
        if self.peek()[0] == "-":
            self.next()
            return Neg(self.parse_unary())
        if self.peek()[0] == "+":
            self.next()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        if self.peek()[0] != "^":
            return base
        self.next()
        # right-associative; unary minus binds looser than ^ on the exponent
        negate = False
        while self.peek()[0] in ("-", "+"):
            if self.next()[0] == "-":
                negate = not negate
        exponent = self.parse_power()
        if negate:
            exponent = Neg(exponent)
        return _make_pow(base, exponent)

    def parse_atom(self):
        tok = self.next()
        kind, value, pos = tok
        if kind == "num":
            return Const(value)
        if kind == "(":
            node = self.parse_sum()
            self.expect(")")
            return node
        if kind == "name":
            if self.peek()[0] == "(":
                if value not in _FUNCTION_NAMES:
                    raise UnknownIdentifierError(value, pos)
                self.next()
                arg = self.parse_sum()
                self.expect(")")
                return Call(value, arg)
            return self._variable(value, pos)
        raise ExprSyntaxError(f"unexpected token {value!r}", pos)

    def _variable(self, name, pos):
        if name == "r":
            self.uses_r = True
            return Var(-1)
        if name.startswith("x") and name[1:].isdigit():
            idx = int(name[1:])
            if 1 <= idx <= self.dim:
                self.uses_x = True
                return Var(idx - 1)
            raise UnknownIdentifierError(name, pos)
        raise UnknownIdentifierError(name, pos)


def _const_value(node):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Neg):
        inner = _const_value(node.arg)
        return None if inner is None else -inner
    return None


def _make_pow(base, exponent):
    c = _const_value(exponent)
    if c is not None and float(c).is_integer() and abs(c) < 1e9:
        return PowInt(base, int(c))
    # non-integer exponent: rewrite as exp(exponent * log(base));
    # positivity of the base is then checked at evaluation time
    return Call("exp", BinOp("*", exponent, Call("log", base)))


def parse_expression(text, dim):
    """Parse ``text`` over variables x1..x{dim} (or r).

    Returns (root node, uses_r flag).  Mixing ``r`` with explicit ``x_i`` is
    rejected.
    """
    parser = _Parser(text, dim)
    root = parser.parse()
    if parser.uses_r and parser.uses_x:
        raise ExprSyntaxError("cannot mix r with explicit coordinates", 0)
    return root, parser.uses_r
