"""Arithmetic expressions in one variable ``x``.

Grammar, loosest binding first::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" power)?            # right-associative
    atom    := NUMBER | "x" | "pi" | "euler_gamma"
             | FUNC "(" expr ")" | "(" expr ")"

The exponent of ``^`` is a power, not a unary, so ``2^-3`` is rejected and
must be written ``2^(-3)``.  There is no implicit multiplication.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from .core import DomainError, working_precision

FUNCTIONS = ("ln", "exp", "sin", "cos", "sqrt")
CONSTANTS = ("pi", "euler_gamma")
VARIABLE = "x"
NAMES = (VARIABLE,) + CONSTANTS + FUNCTIONS

BINARY_OPS = {"+": "add", "-": "sub", "*": "mul", "/": "div", "^": "pow"}


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        detail = f"{message} at offset {offset}"
        if expected:
            detail += f"; expected one of: {', '.join(expected)}"
        super().__init__(detail)
        self.offset = offset
        self.expected = expected


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r}", offset, NAMES)
        self.name = name


class ExprDomainError(DomainError):
    pass


@dataclass(frozen=True)
class Node:
    """AST node.

    ``kind`` is one of ``const``, ``var``, ``neg``, ``add``, ``sub``, ``mul``,
    ``div``, ``pow`` or ``call``.  Constants keep their source text (a decimal
    literal or a named constant) in ``value`` so they are rounded only at
    evaluation time; calls keep the function name there.
    """

    kind: str
    children: tuple["Node", ...] = ()
    value: str = ""

    def __post_init__(self):
        arity = {"const": 0, "var": 0, "neg": 1, "call": 1}.get(self.kind, 2)
        if self.kind not in ("const", "var", "neg", "call") and self.kind not in BINARY_OPS.values():
            raise ValueError(f"unknown node kind {self.kind!r}")
        if len(self.children) != arity:
            raise ValueError(f"{self.kind} node needs {arity} children")

    def __str__(self) -> str:
        return to_source(self)


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(source: str):
    pos = 0
    tokens = []
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if not m:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", _byte_offset(source, pos),
                                  ("number", "name", "operator"))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), _byte_offset(source, pos)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(source, len(source))))
    return tokens


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, value, offset = self.take()
        if value != text:
            raise ExprSyntaxError(f"unexpected {value or 'end of input'!r}", offset, (repr(text),))

    def parse(self) -> Node:
        node = self.expr()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {value!r}", offset, ("'+'", "'-'", "'*'", "'/'", "'^'", "end of input"))
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Node(BINARY_OPS[op], (node, self.term()))
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Node(BINARY_OPS[op], (node, self.unary()))
        return node

    def unary(self) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Node("neg", (self.unary(),))
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return Node("pow", (base, self.power()))
        return base

    def atom(self) -> Node:
        kind, value, offset = self.take()
        if kind == "number":
            return Node("const", value=value)
        if kind == "name":
            if value == VARIABLE:
                return Node("var")
            if value in CONSTANTS:
                return Node("const", value=value)
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Node("call", (arg,), value)
            raise UnknownIdentifierError(value, offset)
        if (kind, value) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        expected = ("number", "x", "pi", "euler_gamma", "function call", "'('")
        raise ExprSyntaxError(f"unexpected {value or 'end of input'!r}", offset, expected)


def parse(source: str) -> Node:
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, ("expression",))
    return _Parser(source).parse()


def to_source(node: Node) -> str:
    """Fully parenthesised source text that parses back to the same tree."""
    k = node.kind
    if k == "const":
        return node.value
    if k == "var":
        return VARIABLE
    if k == "neg":
        return f"(-{to_source(node.children[0])})"
    if k == "call":
        return f"{node.value}({to_source(node.children[0])})"
    sym = {v: s for s, v in BINARY_OPS.items()}[k]
    left, right = node.children
    return f"({to_source(left)} {sym} {to_source(right)})"


def _constant(text: str, precision: int) -> mpfr:
    if text == "pi":
        return gmpy2.const_pi(precision)
    if text == "euler_gamma":
        from .oracles import euler_gamma
        return euler_gamma(precision)
    return mpfr(text, precision)


def evaluate(node: Node, x, precision: int) -> mpfr:
    """Evaluate bottom-up at ``precision`` bits; raises ExprDomainError off-domain."""
    with working_precision(precision):
        return _eval(node, mpfr(x, precision), precision)


def _eval(node: Node, x: mpfr, precision: int) -> mpfr:
    k = node.kind
    if k == "const":
        return _constant(node.value, precision)
    if k == "var":
        return x
    if k == "neg":
        return -_eval(node.children[0], x, precision)
    if k == "call":
        arg = _eval(node.children[0], x, precision)
        name = node.value
        if name == "ln":
            if not arg > 0:
                raise ExprDomainError(f"ln of nonpositive value {arg} in {to_source(node)} at x={x}")
            return gmpy2.log(arg)
        if name == "sqrt":
            if arg < 0:
                raise ExprDomainError(f"sqrt of negative value {arg} in {to_source(node)} at x={x}")
            return gmpy2.sqrt(arg)
        return getattr(gmpy2, name)(arg)
    left = _eval(node.children[0], x, precision)
    right = _eval(node.children[1], x, precision)
    if k == "add":
        return left + right
    if k == "sub":
        return left - right
    if k == "mul":
        return left * right
    if k == "div":
        if gmpy2.is_zero(right):
            raise ExprDomainError(f"division by zero in {to_source(node)} at x={x}")
        return left / right
    # pow
    if left < 0 and not gmpy2.is_integer(right):
        raise ExprDomainError(f"negative base to non-integer power in {to_source(node)} at x={x}")
    if gmpy2.is_zero(left) and right < 0:
        raise ExprDomainError(f"zero to negative power in {to_source(node)} at x={x}")
    return left ** right
