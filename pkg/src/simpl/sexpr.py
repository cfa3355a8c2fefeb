"""S-expression reader shared by the DSL front end and the model parser.

Produces a small surface datum tree (`SAtom` / `SList`) annotated with
line/column positions; `;` starts a line comment, `'x` abbreviates
`(quote x)`, booleans are `#t`/`#f`, and `#:name` reads as a `Keyword`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import DslSyntaxError


class Symbol(str):
    __slots__ = ()

    def __repr__(self) -> str:
        return str(self)


class Keyword(str):
    __slots__ = ()

    def __repr__(self) -> str:
        return "#:" + str(self)


@dataclass
class SAtom:
    value: object  # bool | int | float | Symbol | Keyword
    pos: tuple[int, int]


@dataclass
class SList:
    items: list
    pos: tuple[int, int]


_TOKEN = re.compile(r"""[()\[\]']|[^\s()\[\]';]+""")
_INT = re.compile(r"[+-]?\d+$")
_FLOAT = re.compile(r"[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")


def tokenize(text: str):
    """Yield (token, (line, col)) pairs, 1-based positions."""
    for lineno, line in enumerate(text.split("\n"), start=1):
        body = line.split(";", 1)[0]
        if '"' in body:
            raise DslSyntaxError("string literals are not supported", (lineno, body.index('"') + 1))
        for m in _TOKEN.finditer(body):
            yield m.group(0), (lineno, m.start() + 1)


def _classify(tok: str, pos) -> SAtom:
    if tok == "#t":
        return SAtom(True, pos)
    if tok == "#f":
        return SAtom(False, pos)
    if tok.startswith("#:"):
        return SAtom(Keyword(tok[2:]), pos)
    if tok.startswith("#"):
        raise DslSyntaxError(f"unknown literal {tok!r}", pos)
    if _INT.match(tok):
        return SAtom(int(tok), pos)
    if _FLOAT.match(tok) and any(c in tok for c in ".eE") and tok not in ("+", "-"):
        try:
            return SAtom(float(tok), pos)
        except ValueError:
            pass
    return SAtom(Symbol(tok), pos)


def read_all(text: str) -> list:
    """Read every top-level form in `text`."""
    tokens = list(tokenize(text))
    forms = []
    i = 0

    def read_one(i: int):
        if i >= len(tokens):
            raise DslSyntaxError("unexpected end of input (unbalanced parenthesis?)",
                                 tokens[-1][1] if tokens else (1, 1))
        tok, pos = tokens[i]
        if tok in "([":
            closer = ")" if tok == "(" else "]"
            items = []
            i += 1
            while True:
                if i >= len(tokens):
                    raise DslSyntaxError("unbalanced parenthesis", pos)
                if tokens[i][0] in ")]":
                    if tokens[i][0] != closer:
                        raise DslSyntaxError(f"mismatched {tokens[i][0]!r}", tokens[i][1])
                    return SList(items, pos), i + 1
                item, i = read_one(i)
                items.append(item)
        if tok in ")]":
            raise DslSyntaxError(f"unexpected {tok!r}", pos)
        if tok == "'":
            inner, i = read_one(i + 1)
            return SList([SAtom(Symbol("quote"), pos), inner], pos), i
        return _classify(tok, pos), i + 1

    while i < len(tokens):
        form, i = read_one(i)
        forms.append(form)
    return forms


def to_datum(sx) -> object:
    """Strip positions: SList -> list, SAtom -> raw value."""
    if isinstance(sx, SList):
        return [to_datum(x) for x in sx.items]
    return sx.value
