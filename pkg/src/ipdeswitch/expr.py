"""A small arithmetic expression language for coefficient functions.

Expressions are parsed once into an immutable AST and evaluated with numpy, so
the same expression can be evaluated at a single point or over a whole grid.

Grammar (lowest to highest precedence)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" exponent)*
    atom   := number | name | name "(" expr ("," expr)* ")" | "(" expr ")"

Exponents are integer literals, optionally negated (``x^-1`` or ``x^(-1)``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

Number = Union[float, np.ndarray]

FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "tanh": (1, np.tanh),
    "abs": (1, np.abs),
    "sqrt": (1, np.sqrt),
    "min": (-2, None),
    "max": (-2, None),
}


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class UndeclaredVariableError(ExprError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"undeclared variable {name!r} at offset {offset}")


class EvalError(ExprError):
    pass


class DivisionByZeroError(EvalError):
    pass


class DomainError(EvalError):
    pass


class MissingBindingError(EvalError):
    pass


class NonFiniteResultError(EvalError):
    pass


# ---------------------------------------------------------------- AST nodes


@dataclass(frozen=True)
class Num:
    value: float

    def __str__(self):
        r = repr(float(self.value))
        return f"({r})" if self.value < 0 else r


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    operand: "Node"

    def __str__(self):
        return f"(-{self.operand})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int

    def __str__(self):
        e = f"({self.exponent})" if self.exponent < 0 else str(self.exponent)
        return f"({self.base}^{e})"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple

    def __str__(self):
        return f"{self.name}({', '.join(str(a) for a in self.args)})"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos), text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, allowed: frozenset[str]):
        self.text = text
        self.allowed = allowed
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, _byte_offset(self.text, tok[2]), self.text)

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] not in ("op",):
            raise self.error(f"expected {value!r}, found {tok[1] or 'end of input'!r}")
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("op", "-", self.peek()[2]):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            node = Pow(node, self.exponent())
        return node

    def exponent(self) -> int:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "(":
            self.advance()
            value = self.exponent()
            self.expect(")")
            return value
        sign = 1
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            sign = -1
            tok = self.peek()
        if tok[0] != "num" or not tok[1].isdigit():
            raise self.error("exponent must be an integer literal")
        self.advance()
        return sign * int(tok[1])

    def atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.advance()
            value = float(tok[1])
            if not np.isfinite(value):
                raise self.error("numeric literal overflows", tok)
            return Num(value)
        if tok[0] == "name":
            self.advance()
            name = tok[1]
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if name not in FUNCTIONS:
                    raise self.error(f"unknown function {name!r}", tok)
                self.advance()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[name][0]
                if (arity > 0 and len(args) != arity) or (arity < 0 and len(args) < -arity):
                    raise self.error(f"wrong number of arguments to {name}", tok)
                return Call(name, tuple(args))
            if name in FUNCTIONS:
                raise self.error(f"function {name!r} used without arguments", tok)
            if name not in self.allowed:
                raise UndeclaredVariableError(name, _byte_offset(self.text, tok[2]))
            return Var(name)
        if tok[0] == "op" and tok[1] == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise self.error(f"unexpected token {tok[1] or 'end of input'!r}")


# ---------------------------------------------------------------- Expr


def _free_vars(node: Node, acc: set):
    if isinstance(node, Var):
        acc.add(node.name)
    elif isinstance(node, Neg):
        _free_vars(node.operand, acc)
    elif isinstance(node, BinOp):
        _free_vars(node.left, acc)
        _free_vars(node.right, acc)
    elif isinstance(node, Pow):
        _free_vars(node.base, acc)
    elif isinstance(node, Call):
        for a in node.args:
            _free_vars(a, acc)
    return acc


def _check(value, what):
    if not np.all(np.isfinite(value)):
        raise NonFiniteResultError(f"non-finite result in {what}")
    return value


def _eval(node: Node, env: Mapping[str, Number]) -> Number:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise MissingBindingError(f"no binding for variable {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return _check(a + b, "addition")
        if node.op == "-":
            return _check(a - b, "subtraction")
        if node.op == "*":
            return _check(a * b, "multiplication")
        if np.any(np.asarray(b) == 0):
            raise DivisionByZeroError(f"division by zero in {node}")
        return _check(a / b, "division")
    if isinstance(node, Pow):
        base = _eval(node.base, env)
        if node.exponent < 0:
            if np.any(np.asarray(base) == 0):
                raise DivisionByZeroError(f"zero raised to a negative power in {node}")
            return _check(1.0 / np.power(base, -node.exponent), "power")
        if node.exponent == 0:
            return np.ones_like(base) if isinstance(base, np.ndarray) else 1.0
        return _check(np.power(base, node.exponent), "power")
    # Call
    args = [_eval(a, env) for a in node.args]
    if node.name == "sqrt" and np.any(np.asarray(args[0]) < 0):
        raise DomainError(f"sqrt of a negative number in {node}")
    if node.name == "min":
        out = args[0]
        for a in args[1:]:
            out = np.minimum(out, a)
        return out
    if node.name == "max":
        out = args[0]
        for a in args[1:]:
            out = np.maximum(out, a)
        return out
    return _check(FUNCTIONS[node.name][1](args[0]), node.name)


class Expr:
    """A parsed expression; immutable and safe to evaluate concurrently."""

    __slots__ = ("root", "source", "variables")

    def __init__(self, root: Node, source: str | None = None):
        self.root = root
        self.source = source if source is not None else str(root)
        self.variables = frozenset(_free_vars(root, set()))

    def __repr__(self):
        return f"Expr({self.source!r})"

    def __str__(self):
        return str(self.root)

    def __eq__(self, other):
        return isinstance(other, Expr) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    @property
    def is_constant(self) -> bool:
        return not self.variables

    def depends_on(self, names: Iterable[str]) -> bool:
        return bool(self.variables.intersection(names))

    def eval(self, bindings: Mapping[str, Number]) -> Number:
        with np.errstate(all="ignore"):
            out = _eval(self.root, bindings)
        out = _check(out, str(self))
        if isinstance(out, np.ndarray):
            return out.astype(float, copy=False)
        return float(out)

    def __call__(self, **bindings):
        return self.eval(bindings)


def parse(text: str, allowed_vars: Iterable[str] = ()) -> Expr:
    """Parse ``text`` into an :class:`Expr`, rejecting names outside ``allowed_vars``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text or "")
    root = _Parser(text, frozenset(allowed_vars)).parse()
    return Expr(root, text.strip())


def evaluate(expr: Expr, bindings: Mapping[str, Number]) -> Number:
    return expr.eval(bindings)


def to_source(expr: Expr) -> str:
    """Canonical, fully parenthesised form that re-parses to an equal AST."""
    return str(expr.root)


def variable_names(*, t=False, k=0, l=0, m=0, d=0, q=False) -> frozenset[str]:
    names = set()
    if t:
        names.add("t")
    names.update(f"x{j}" for j in range(1, k + 1))
    names.update(f"e{j}" for j in range(1, l + 1))
    names.update(f"y{j}" for j in range(1, m + 1))
    names.update(f"z{j}" for j in range(1, d + 1))
    if q:
        names.add("q")
    return frozenset(names)


def is_zero(expr: Expr) -> bool:
    return expr.is_constant and expr.eval({}) == 0.0

