"""Closed arithmetic grammar evaluated with Decimal semantics.

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('+' | '-') unary | primary
    primary := NUMBER | '(' expr ')' | func '(' args ')'
    func    := 'min' | 'max' | 'sum'
    args    := '[' expr (',' expr)* ']' | expr (',' expr)*

Model-written expressions never reach ``eval``. A trailing run of words
after the expression (``... yuan``) is returned as the unit.
"""

from __future__ import annotations

import re
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation, localcontext

from .errors import DivisionByZero, ExpressionError

PRECISION = 60
MAX_DEPTH = 64
_NUMBER = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)")
_FUNC = re.compile(r"(min|max|sum)\b")
_UNIT = re.compile(r"[^\W\d_][^\d()\[\],+*/=]*")
_CENT = Decimal("0.01")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.depth = 0

    def ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def fail(self, expected: str) -> ExpressionError:
        return ExpressionError(f"expected {expected}", self.pos)

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.fail(repr(ch))
        self.pos += 1

    def expr(self) -> Decimal:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise ExpressionError("expression nested too deeply", self.pos)
        value = self.term()
        while self.peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        self.depth -= 1
        return value

    def term(self) -> Decimal:
        value = self.unary()
        while self.peek() in ("*", "/"):
            op = self.text[self.pos]
            at = self.pos
            self.pos += 1
            rhs = self.unary()
            if op == "*":
                value = value * rhs
            else:
                if rhs == 0:
                    raise DivisionByZero(at)
                value = value / rhs
        return value

    def unary(self) -> Decimal:
        ch = self.peek()
        if ch in ("+", "-"):
            self.pos += 1
            self.depth += 1
            if self.depth > MAX_DEPTH:
                raise ExpressionError("expression nested too deeply", self.pos)
            v = self.unary()
            self.depth -= 1
            return -v if ch == "-" else v
        return self.primary()

    def primary(self) -> Decimal:
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            v = self.expr()
            self.expect(")")
            return v
        m = _FUNC.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return self.call(m.group(1))
        m = _NUMBER.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return Decimal(m.group(0))
        raise self.fail("number, '(' or min/max/sum")

    def call(self, name: str) -> Decimal:
        self.expect("(")
        bracket = self.peek() == "["
        if bracket:
            self.pos += 1
        args = [self.expr()]
        while self.peek() == ",":
            self.pos += 1
            args.append(self.expr())
        if bracket:
            self.expect("]")
        self.expect(")")
        if name == "min":
            return min(args)
        if name == "max":
            return max(args)
        total = Decimal(0)
        for a in args:
            total += a
        return total


def evaluate(text: str) -> tuple[Decimal, str]:
    """Evaluate an expression. Returns (exact-ish value, unit text)."""
    with localcontext() as ctx:
        ctx.prec = PRECISION
        p = _Parser(text)
        if not p.peek():
            raise ExpressionError("empty expression", 0)
        value = p.expr()
        p.ws()
        rest = text[p.pos:].strip()
        if rest and not _UNIT.fullmatch(rest):
            raise ExpressionError(f"unexpected trailing text {rest[:20]!r}", p.pos)
        return +value, rest


def round_cents(value: Decimal) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = PRECISION + 4
        try:
            q = value.quantize(_CENT, rounding=ROUND_HALF_UP)
        except InvalidOperation as exc:
            raise ExpressionError("result too large to format") from exc
    # no negative zero
    return q if q else Decimal("0.00")


def format_result(value: Decimal, unit: str = "") -> str:
    text = f"{round_cents(value):.2f}"
    return f"{text} {unit}" if unit else text
