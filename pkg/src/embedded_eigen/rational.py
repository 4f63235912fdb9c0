"""Parsing and formatting of exact rationals as ``"num/den"`` strings."""

from __future__ import annotations

import re
from fractions import Fraction

_RATIONAL_RE = re.compile(r"^\s*([+-]?\d+)\s*(?:/\s*(\d+)\s*)?$")


class RationalParseError(ValueError):
    """Raised for malformed rational literals; carries the offending position."""

    def __init__(self, text: str, column: int, reason: str, line: int = 1):
        self.text = text
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(f"line {line}, column {column}: {reason}: {text!r}")


def parse_rational(text, *, line: int = 1, column: int = 1) -> Fraction:
    """Parse ``"p"`` or ``"p/q"`` (also accepts int and Fraction).

    Floats are rejected on purpose: they would silently break exactness.
    """
    if isinstance(text, Fraction):
        return text
    if isinstance(text, bool):
        raise RationalParseError(str(text), column, "booleans are not rationals", line)
    if isinstance(text, int):
        return Fraction(text)
    if not isinstance(text, str):
        raise RationalParseError(repr(text), column, "expected 'num/den' string", line)
    m = _RATIONAL_RE.match(text)
    if m is None:
        raise RationalParseError(text, column, "not a rational literal", line)
    num = int(m.group(1))
    den = int(m.group(2)) if m.group(2) is not None else 1
    if den == 0:
        slash = text.index("/")
        raise RationalParseError(text, column + slash + 1, "zero denominator", line)
    return Fraction(num, den)


def parse_rational_list(text: str, *, line: int = 1) -> list[Fraction]:
    """Parse a comma separated list such as ``"2,-2,5/2"``."""
    out = []
    col = 1
    for piece in text.split(","):
        stripped = piece.strip()
        if not stripped:
            raise RationalParseError(text, col, "empty entry", line)
        lead = len(piece) - len(piece.lstrip())
        out.append(parse_rational(stripped, line=line, column=col + lead))
        col += len(piece) + 1
    return out


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"
