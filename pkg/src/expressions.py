"""Expression language for statistics, decomposition components and test
functions.

Grammar (EBNF), conventional precedence, ``^`` right-associative::

    expression := additive
    additive   := multiplicative { ("+" | "-") multiplicative }
    multiplicative := unary { ("*" | "/") unary }
    unary      := ("-" | "+") unary | power
    power      := primary [ ("^" | "**") unary ]
    primary    := NUMBER | VARIABLE | CONSTANT
                | FUNCTION "(" expression { "," expression } ")"
                | "(" expression ")"
    VARIABLE   := "x" DIGITS            (x1 .. xn; plain "x" means x1 when n = 1)
    CONSTANT   := "pi" | "e"
    FUNCTION   := exp | log | sin | cos | tanh | abs | sqrt | min | max | sum

Evaluation is vectorized: a point is an array whose first axis runs over the
n coordinates. Forward-mode derivatives use :class:`DualValue`.
"""
import logging
import math
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DimensionError, ExpressionDomainError, ExpressionSyntaxError

logger = logging.getLogger(__name__)

UNARY_FUNCTIONS = ("exp", "log", "sin", "cos", "tanh", "abs", "sqrt")
NARY_FUNCTIONS = ("min", "max", "sum")
CONSTANTS = {"pi": math.pi, "e": math.e}


class DualValue:
    """Value and directional derivative carried together (a + b·ε, ε² = 0)."""

    __slots__ = ("value", "deriv")

    def __init__(self, value, deriv=0.0):
        self.value = np.asarray(value, dtype=float)
        self.deriv = np.broadcast_to(np.asarray(deriv, dtype=float), self.value.shape)

    @staticmethod
    def lift(other) -> "DualValue":
        return other if isinstance(other, DualValue) else DualValue(other, 0.0)

    def __add__(self, other):
        other = DualValue.lift(other)
        return DualValue(self.value + other.value, self.deriv + other.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        other = DualValue.lift(other)
        return DualValue(self.value - other.value, self.deriv - other.deriv)

    def __rsub__(self, other):
        return DualValue.lift(other) - self

    def __mul__(self, other):
        other = DualValue.lift(other)
        return DualValue(self.value * other.value, self.value * other.deriv + self.deriv * other.value)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = DualValue.lift(other)
        if np.any(other.value == 0.0):
            raise ZeroDivisionError("Dual division by zero real part")
        value = self.value / other.value
        return DualValue(value, (self.deriv - value * other.deriv) / other.value)

    def __neg__(self):
        return DualValue(-self.value, -self.deriv)

    def __repr__(self) -> str:
        return f"DualValue({self.value!r}, {self.deriv!r})"


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


class Node(ABC):
    """Expression tree node. Nodes are immutable and compare structurally."""

    @abstractmethod
    def value(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points ``x`` (first axis = coordinates)."""

    @abstractmethod
    def dual(self, x: np.ndarray, k: int) -> DualValue:
        """Evaluate with the derivative along coordinate ``k`` (1-based)."""

    @abstractmethod
    def to_text(self) -> str:
        """Fully parenthesized text that parses back to this node."""

    @abstractmethod
    def variables(self) -> frozenset:
        """Indices of the variables the node depends on."""

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class Const(Node):
    number: float

    def value(self, x):
        return np.full(np.shape(x)[1:], self.number)

    def dual(self, x, k):
        return DualValue(self.value(x), 0.0)

    def to_text(self):
        return repr(float(self.number))

    def variables(self):
        return frozenset()


@dataclass(frozen=True)
class Var(Node):
    index: int

    def value(self, x):
        return np.asarray(x[self.index - 1], dtype=float)

    def dual(self, x, k):
        return DualValue(self.value(x), 1.0 if self.index == k else 0.0)

    def to_text(self):
        return f"x{self.index}"

    def variables(self):
        return frozenset({self.index})


def _domain_check(condition: np.ndarray, message: str, node: Node) -> None:
    if np.any(condition):
        raise ExpressionDomainError(message, node.to_text())


@dataclass(frozen=True)
class Unary(Node):
    op: str  # "neg" or a name in UNARY_FUNCTIONS
    operand: Node

    def _check(self, v):
        if self.op == "log":
            _domain_check(v <= 0, "log of a non-positive number", self)
        elif self.op == "sqrt":
            _domain_check(v < 0, "sqrt of a negative number", self)

    def value(self, x):
        v = self.operand.value(x)
        self._check(v)
        if self.op == "neg":
            return -v
        return getattr(np, self.op)(v)

    def dual(self, x, k):
        a = self.operand.dual(x, k)
        v, d = a.value, a.deriv
        self._check(v)
        if self.op == "neg":
            return -a
        if self.op == "exp":
            e = np.exp(v)
            return DualValue(e, e * d)
        if self.op == "log":
            return DualValue(np.log(v), d / v)
        if self.op == "sin":
            return DualValue(np.sin(v), np.cos(v) * d)
        if self.op == "cos":
            return DualValue(np.cos(v), -np.sin(v) * d)
        if self.op == "tanh":
            t = np.tanh(v)
            return DualValue(t, (1.0 - t * t) * d)
        if self.op == "abs":
            # Kink convention: d|v| = 0 at v = 0
            return DualValue(np.abs(v), np.sign(v) * d)
        if self.op == "sqrt":
            r = np.sqrt(v)
            _domain_check((r == 0) & (d != 0), "sqrt is not differentiable at 0", self)
            with np.errstate(divide="ignore", invalid="ignore"):
                return DualValue(r, np.where(d == 0, 0.0, 0.5 * d / r))
        raise ExpressionDomainError(f"Unknown unary operator {self.op}", self.to_text())

    def to_text(self):
        if self.op == "neg":
            return f"(-{self.operand.to_text()})"
        return f"{self.op}({self.operand.to_text()})"

    def variables(self):
        return self.operand.variables()


@dataclass(frozen=True)
class Binary(Node):
    op: str  # one of + - * / ^
    left: Node
    right: Node

    def _integer_exponent(self, x) -> Optional[int]:
        if self.right.variables():
            return None
        e = np.unique(self.right.value(x))
        if e.size == 1 and float(e[0]).is_integer():
            return int(e[0])
        return None

    def value(self, x):
        a = self.left.value(x)
        b = self.right.value(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            _domain_check(b == 0, "division by zero", self)
            return a / b
        n = self._integer_exponent(x)
        if n is not None:
            _domain_check((a == 0) & (n < 0), "zero raised to a negative power", self)
            return np.power(a, float(n))
        _domain_check(a <= 0, "non-integer power of a non-positive base", self)
        return np.power(a, b)

    def dual(self, x, k):
        a = self.left.dual(x, k)
        b = self.right.dual(x, k)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            _domain_check(b.value == 0, "division by zero", self)
            return a / b
        n = self._integer_exponent(x)
        if n is not None:
            _domain_check((a.value == 0) & (n < 0), "zero raised to a negative power", self)
            if n == 0:
                return DualValue(np.ones_like(a.value), 0.0)
            return DualValue(np.power(a.value, float(n)), n * np.power(a.value, float(n - 1)) * a.deriv)
        _domain_check(a.value <= 0, "non-integer power of a non-positive base", self)
        p = np.power(a.value, b.value)
        return DualValue(p, p * (b.deriv * np.log(a.value) + b.value * a.deriv / a.value))

    def to_text(self):
        return f"({self.left.to_text()} {self.op} {self.right.to_text()})"

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Call(Node):
    name: str  # one of NARY_FUNCTIONS
    args: Tuple[Node, ...]

    def value(self, x):
        values = [a.value(x) for a in self.args]
        if self.name == "sum":
            return np.sum(np.stack(np.broadcast_arrays(*values)), axis=0)
        reduce = np.maximum if self.name == "max" else np.minimum
        out = values[0]
        for v in values[1:]:
            out = reduce(out, v)
        return out

    def dual(self, x, k):
        duals = [a.dual(x, k) for a in self.args]
        if self.name == "sum":
            out = duals[0]
            for d in duals[1:]:
                out = out + d
            return out
        # Kink convention: derivative of the first attaining argument
        better = np.greater if self.name == "max" else np.less
        best_v, best_d = duals[0].value, duals[0].deriv
        for d in duals[1:]:
            mask = better(d.value, best_v)
            best_v = np.where(mask, d.value, best_v)
            best_d = np.where(mask, d.deriv, best_d)
        return DualValue(best_v, best_d)

    def to_text(self):
        return f"{self.name}({', '.join(a.to_text() for a in self.args)})"

    def variables(self):
        out = frozenset()
        for a in self.args:
            out = out | a.variables()
        return out


# --------------------------------------------------------------------------
# Tokenizer and parser
# --------------------------------------------------------------------------

_TOKEN_SPEC = [
    ("NUMBER", r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"),
    ("NAME", r"[A-Za-z_][A-Za-z_0-9]*"),
    ("POW", r"\*\*|\^"),
    ("OP", r"[+\-*/]"),
    ("LPAREN", r"\("),
    ("RPAREN", r"\)"),
    ("COMMA", r","),
    ("SKIP", r"\s+"),
    ("MISMATCH", r"."),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int


def tokenize(text: str) -> List[Token]:
    """Split expression text into tokens (whitespace dropped)."""
    tokens = []
    for match in _TOKEN_RE.finditer(text):
        kind = match.lastgroup
        if kind == "SKIP":
            continue
        if kind == "MISMATCH":
            raise ExpressionSyntaxError(f"Unexpected character {match.group()!r}", match.start(), text)
        tokens.append(Token(kind, match.group(), match.start()))
    tokens.append(Token("EOF", "", len(text)))
    return tokens


class Parser:
    """Recursive-descent parser producing :class:`Node` trees."""

    def __init__(self, text: str, dimension: int):
        self.text = text
        self.dimension = dimension
        self.tokens = tokenize(text)
        self.current = 0

    def peek(self) -> Token:
        return self.tokens[self.current]

    def advance(self) -> Token:
        token = self.tokens[self.current]
        self.current += 1
        return token

    def match(self, kind: str, *texts: str) -> Optional[Token]:
        token = self.peek()
        if token.kind == kind and (not texts or token.text in texts):
            return self.advance()
        return None

    def expect(self, kind: str, what: str) -> Token:
        token = self.match(kind)
        if token is None:
            self.error(f"Expected {what}")
        return token

    def error(self, message: str):
        token = self.peek()
        found = "end of input" if token.kind == "EOF" else repr(token.text)
        raise ExpressionSyntaxError(f"{message}, found {found}", token.position, self.text)

    def parse(self) -> Node:
        node = self.additive()
        if self.peek().kind != "EOF":
            self.error("Unexpected token")
        return node

    def additive(self) -> Node:
        node = self.multiplicative()
        while True:
            token = self.match("OP", "+", "-")
            if token is None:
                return node
            node = Binary(token.text, node, self.multiplicative())

    def multiplicative(self) -> Node:
        node = self.unary()
        while True:
            token = self.match("OP", "*", "/")
            if token is None:
                return node
            node = Binary(token.text, node, self.unary())

    def unary(self) -> Node:
        if self.match("OP", "-"):
            return Unary("neg", self.unary())
        if self.match("OP", "+"):
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.match("POW"):
            return Binary("^", base, self.unary())
        return base

    def primary(self) -> Node:
        token = self.peek()
        if token.kind == "NUMBER":
            self.advance()
            return Const(float(token.text))
        if token.kind == "LPAREN":
            self.advance()
            node = self.additive()
            self.expect("RPAREN", "')'")
            return node
        if token.kind == "NAME":
            self.advance()
            return self.name(token)
        self.error("Expected a number, variable, function or '('")

    def name(self, token: Token) -> Node:
        name = token.text
        if name in UNARY_FUNCTIONS or name in NARY_FUNCTIONS:
            self.expect("LPAREN", f"'(' after {name}")
            args = [self.additive()]
            while self.match("COMMA"):
                args.append(self.additive())
            self.expect("RPAREN", "')'")
            if name in UNARY_FUNCTIONS:
                if len(args) != 1:
                    raise ExpressionSyntaxError(f"{name} takes exactly one argument", token.position, self.text)
                return Unary(name, args[0])
            return Call(name, tuple(args))
        if name in CONSTANTS:
            return Const(CONSTANTS[name])
        match = re.fullmatch(r"x(\d*)", name)
        if match:
            digits = match.group(1)
            if not digits:
                if self.dimension != 1:
                    raise ExpressionSyntaxError("Bare 'x' is only allowed in one dimension", token.position, self.text)
                return Var(1)
            index = int(digits)
            if index < 1:
                raise ExpressionSyntaxError("Variable indices start at 1", token.position, self.text)
            if index > self.dimension:
                raise DimensionError(
                    f"Variable x{index} at position {token.position} exceeds dimension {self.dimension}"
                )
            return Var(index)
        raise ExpressionSyntaxError(f"Unknown name {name!r}", token.position, self.text)


# --------------------------------------------------------------------------
# Public handle
# --------------------------------------------------------------------------


class Expression:
    """A parsed scalar function of x1..xn."""

    def __init__(self, root: Node, dimension: int, text: str | None = None):
        self.root = root
        self.dimension = dimension
        self.text = text if text is not None else root.to_text()

    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[0] != self.dimension:
            raise DimensionError(
                f"Expression in {self.dimension} variables evaluated at a point with shape {x.shape}"
            )
        return x

    def evaluate(self, x):
        """Value at ``x``; ``x`` has shape (n,) or (n, ...)."""
        x = self._points(x)
        out = np.broadcast_to(np.asarray(self.root.value(x), dtype=float), x.shape[1:])
        return float(out) if out.ndim == 0 else np.array(out)

    __call__ = evaluate

    def partial(self, k: int, x):
        """Exact partial derivative ∂/∂x_k at ``x`` by dual-number propagation."""
        if not 1 <= k <= self.dimension:
            raise DimensionError(f"Coordinate {k} outside 1..{self.dimension}")
        x = self._points(x)
        deriv = np.broadcast_to(self.root.dual(x, k).deriv, x.shape[1:]).copy()
        return float(deriv) if deriv.ndim == 0 else deriv

    def variables(self) -> frozenset:
        return self.root.variables()

    def max_index(self) -> int:
        return max(self.variables(), default=0)

    def to_text(self) -> str:
        return self.root.to_text()

    def as_function(self) -> Callable[[np.ndarray], np.ndarray]:
        """One-variable expression as a vectorized callable of a plain array."""
        if self.dimension != 1:
            raise DimensionError("Only one-variable expressions convert to functions")
        return lambda y: self.evaluate(np.asarray(y, dtype=float)[None, ...])

    def derivative_function(self) -> Callable[[np.ndarray], np.ndarray]:
        """Derivative of a one-variable expression as a vectorized callable."""
        if self.dimension != 1:
            raise DimensionError("Only one-variable expressions convert to functions")
        return lambda y: self.partial(1, np.asarray(y, dtype=float)[None, ...])

    def __eq__(self, other) -> bool:
        return isinstance(other, Expression) and self.root == other.root and self.dimension == other.dimension

    def __hash__(self) -> int:
        return hash((self.root, self.dimension))

    def __repr__(self) -> str:
        return f"Expression({self.text!r}, n={self.dimension})"


def parse(text: str, dimension: int) -> Expression:
    """Parse ``text`` into an expression of ``dimension`` variables.

    Raises:
        ExpressionSyntaxError: On malformed text (carries the position)
        DimensionError: If a variable index exceeds ``dimension``
    """
    if dimension < 1:
        raise DimensionError(f"Dimension must be positive, got {dimension}")
    root = Parser(text, dimension).parse()
    logger.debug(f"Parsed {text!r} as {root.to_text()}")
    return Expression(root, dimension, text)


def parse_all(texts: Sequence[str], dimension: int) -> List[Expression]:
    """Parse several expressions of the same dimension."""
    return [parse(t, dimension) for t in texts]

