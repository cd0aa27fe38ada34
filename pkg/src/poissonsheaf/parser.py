"""
Precedence-climbing parser for the expression grammar.

    expr     := term (("+" | "-") term)*
    term     := unary (("*" | "/") unary)*
    unary    := ("-" | "+") unary | power
    power    := atom ("^" exponent)?
    exponent := sign? INTEGER | "(" sign? INTEGER ")"
    atom     := NUMBER | VARIABLE | PRIMITIVE "(" expr ")" | "(" expr ")"

VARIABLE is `x1` .. `xn` for the declared dimension, PRIMITIVE is one of
`sin`, `cos`, `exp`, NUMBER is an integer or a decimal literal (read as an
exact rational).
"""

from __future__ import annotations

import re
from collections.abc import Callable
from dataclasses import dataclass
from functools import cache
from typing import Final

import sympy

from poissonsheaf.constants import VARIABLE_PREFIX
from poissonsheaf.definitions import PoissonSheafError


TOKEN_PATTERN: Final[re.Pattern[str]] = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)
VARIABLE_PATTERN: Final[re.Pattern[str]] = re.compile(
    rf"^{VARIABLE_PREFIX}([1-9]\d*)$"
)

# Binding power of each infix operator; higher binds tighter.
BINARY_OPERATORS: Final[dict[str, int]] = {"+": 10, "-": 10, "*": 20, "/": 20}
UNARY_BINDING: Final[int] = 25

PRIMITIVE_FUNCTIONS: Final[dict[str, Callable[[sympy.Expr], sympy.Expr]]] = {
    "sin": sympy.sin,
    "cos": sympy.cos,
    "exp": sympy.exp,
}


class ExprSyntaxError(PoissonSheafError):
    """Malformed expression text."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownVariableError(PoissonSheafError):
    """Identifier that is neither a coordinate variable nor a primitive."""


class VariableIndexError(UnknownVariableError):
    """Coordinate variable beyond the declared dimension."""


@cache
def variable_symbol(index: int) -> sympy.Symbol:
    """The sympy symbol standing for coordinate `x<index>` (1-based)."""
    return sympy.Symbol(f"{VARIABLE_PREFIX}{index}", real=True)


def variable_index(name: str, dimension: int) -> int:
    """Validate a variable name against a dimension, returning its 1-based index."""
    match = VARIABLE_PATTERN.match(name)
    if match is None:
        raise UnknownVariableError(f"unknown variable {name!r}")
    index = int(match.group(1))
    if index > dimension:
        raise VariableIndexError(
            f"variable {name!r} exceeds dimension {dimension}"
        )
    return index


@dataclass(slots=True, frozen=True)
class Token:
    kind: str
    text: str
    position: int


def tokenize(text: str) -> list[Token]:
    """Split expression text into tokens, terminated by an `end` token."""
    tokens: list[Token] = []
    position = 0
    while position < len(text):
        if text[position:].strip() == "":
            break
        match = TOKEN_PATTERN.match(text, position)
        if match is None or match.end() == position:
            offset = len(text[position:]) - len(text[position:].lstrip())
            raise ExprSyntaxError(
                f"unexpected character {text[position + offset]!r}", position + offset
            )
        kind = match.lastgroup
        assert kind is not None
        tokens.append(Token(kind, match.group(kind), match.start(kind)))
        position = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class Parser:
    """Parses one expression under a fixed ambient dimension."""

    def __init__(self, text: str, dimension: int) -> None:
        self.text = text
        self.dimension = dimension
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, text: str) -> Token:
        token = self.current
        if token.text != text or token.kind == "end":
            raise self.unexpected(token, f"expected {text!r}")
        return self.advance()

    def unexpected(self, token: Token, message: str | None = None) -> ExprSyntaxError:
        if token.kind == "end":
            return ExprSyntaxError(message or "unexpected end of input", token.position)
        return ExprSyntaxError(
            message or f"unexpected token {token.text!r}", token.position
        )

    def parse(self) -> sympy.Expr:
        if self.current.kind == "end":
            raise self.unexpected(self.current, "empty expression")
        node = self.expression(0)
        if self.current.kind != "end":
            raise self.unexpected(self.current)
        return node

    def expression(self, min_binding: int) -> sympy.Expr:
        left = self.prefix()
        while True:
            token = self.current
            binding = BINARY_OPERATORS.get(token.text) if token.kind == "op" else None
            if binding is None or binding <= min_binding:
                return left
            self.advance()
            right = self.expression(binding)
            left = self.combine(token, left, right)

    def combine(self, token: Token, left: sympy.Expr, right: sympy.Expr) -> sympy.Expr:
        match token.text:
            case "+":
                return left + right
            case "-":
                return left - right
            case "*":
                return left * right
            case "/":
                if right.is_zero is True:
                    raise ExprSyntaxError("division by the zero constant", token.position)
                return left / right
        raise self.unexpected(token)

    def prefix(self) -> sympy.Expr:
        token = self.current
        if token.kind == "op" and token.text in {"-", "+"}:
            self.advance()
            operand = self.expression(UNARY_BINDING)
            return -operand if token.text == "-" else operand
        return self.power()

    def power(self) -> sympy.Expr:
        base = self.atom()
        if self.current.text == "^" and self.current.kind == "op":
            self.advance()
            exponent = self.exponent()
            if exponent < 0 and base.is_zero is True:
                raise ExprSyntaxError("division by the zero constant", self.current.position)
            return base**exponent
        return base

    def exponent(self) -> int:
        parenthesized = self.current.text == "("
        if parenthesized:
            self.advance()
        sign = 1
        if self.current.text in {"-", "+"}:
            sign = -1 if self.advance().text == "-" else 1
        token = self.current
        if token.kind != "number" or "." in token.text:
            raise self.unexpected(token, "exponent must be an integer")
        self.advance()
        if parenthesized:
            self.expect(")")
        return sign * int(token.text)

    def atom(self) -> sympy.Expr:
        token = self.advance()
        match token.kind:
            case "number":
                return sympy.Rational(token.text)
            case "name" if token.text in PRIMITIVE_FUNCTIONS:
                self.expect("(")
                argument = self.expression(0)
                self.expect(")")
                return PRIMITIVE_FUNCTIONS[token.text](argument)
            case "name":
                return variable_symbol(variable_index(token.text, self.dimension))
            case "op" if token.text == "(":
                inner = self.expression(0)
                self.expect(")")
                return inner
        raise self.unexpected(token)


def parse_node(text: str, dimension: int) -> sympy.Expr:
    """Parse expression text into a sympy tree over `x1..x<dimension>`."""
    return Parser(text, dimension).parse()
