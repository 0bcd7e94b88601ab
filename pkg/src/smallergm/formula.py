"""Model formula language.

Grammar (LL(1); whitespace is insignificant)::

    formula     = item { "+" item } EOF ;
    item        = "offset" "(" term ")"
                | "constraint" "(" term cmp NUMBER ")"
                | term ;
    term        = stat [ "*" interaction ] ;
    stat        = ( "sqrt" | "log" ) "(" base ")"
                | ( "pow" | "scale" ) "(" base "," NUMBER ")"
                | base ;
    base        = BASENAME [ "(" NAME ")" ] ;
    interaction = "I" "(" "n" "==" INTEGER ")"
                | "log" "(" "1" "/" "n" ")" ;
    cmp         = ">=" | "<=" ;

``BASENAME`` is one of the base statistics in :mod:`smallergm.terms`.
Examples::

    edges + nodematch(gender) + sqrt(nodematch(gender))
    edges + ttriad + edges * I(n == 5) + offset(edges * log(1/n))
    edges + constraint(edges >= 5)
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .terms import BASE_TERMS, ModelError, ModelSpec, OffsetSpec, TermSpec

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<op>==|>=|<=|[-+*(),/])
    """,
    re.VERBOSE,
)


class FormulaError(ValueError):
    """Syntax or semantic error in a formula, with its character position."""

    def __init__(self, message: str, pos: int, text: str):
        self.pos, self.text = pos, text
        caret = " " * pos + "^"
        super().__init__(f"{message} at position {pos}\n  {text}\n  {caret}")


@dataclass
class Token:
    kind: str  # "number", "name", "op", "eof"
    value: str
    pos: int


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), pos))
        pos = m.end()
    out.append(Token("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, expected: str, tok: Token | None = None):
        tok = tok or self.tok
        got = "end of input" if tok.kind == "eof" else repr(tok.value)
        raise FormulaError(f"expected {expected}, got {got}", tok.pos, self.text)

    def take(self, value: str, expected: str | None = None) -> Token:
        if self.tok.value != value or self.tok.kind == "eof":
            self.error(expected or repr(value))
        tok = self.tok
        self.i += 1
        return tok

    def number(self) -> float:
        if self.tok.kind != "number":
            self.error("a number")
        v = float(self.tok.value)
        self.i += 1
        return v

    def formula(self) -> ModelSpec:
        terms: list[TermSpec] = []
        offsets: list[OffsetSpec] = []
        seen: dict[str, int] = {}
        while True:
            start = self.tok
            kind, obj = self.item()
            name = obj.name
            if name in seen:
                raise FormulaError(f"duplicate term {name!r}", start.pos, self.text)
            seen[name] = start.pos
            (terms if kind == "term" else offsets).append(obj)
            if self.tok.kind == "eof":
                break
            self.take("+", "'+' or end of input")
        if not terms:
            raise FormulaError("formula has no free terms", 0, self.text)
        return terms, offsets

    def item(self):
        if self.tok.kind == "name" and self.tok.value == "offset":
            self.i += 1
            self.take("(")
            t = self.term()
            self.take(")")
            return "offset", OffsetSpec(t)
        if self.tok.kind == "name" and self.tok.value == "constraint":
            self.i += 1
            self.take("(")
            t = self.term()
            if self.tok.value not in (">=", "<="):
                self.error("'>=' or '<='")
            op = self.tok.value
            self.i += 1
            bound = self.number()
            self.take(")")
            return "offset", OffsetSpec(t, op, bound)
        return "term", self.term()

    def term(self) -> TermSpec:
        start = self.tok
        fields = self.stat()
        if self.tok.value == "*" and self.tok.kind == "op":
            self.i += 1
            fields.update(self.interaction())
        try:
            return TermSpec(**fields)
        except ModelError as e:
            raise FormulaError(str(e), start.pos, self.text) from None

    def stat(self) -> dict:
        tok = self.tok
        if tok.kind != "name":
            self.error("a term name")
        if tok.value in ("sqrt", "log"):
            self.i += 1
            self.take("(")
            fields = self.base()
            self.take(")")
            fields["transform"] = tok.value
            return fields
        if tok.value in ("pow", "scale"):
            self.i += 1
            self.take("(")
            fields = self.base()
            self.take(",")
            fields["param"] = self.number()
            self.take(")")
            fields["transform"] = tok.value
            return fields
        return self.base()

    def base(self) -> dict:
        tok = self.tok
        if tok.kind != "name":
            self.error("a term name")
        if tok.value not in BASE_TERMS:
            raise FormulaError(
                f"unknown term {tok.value!r} (known: {', '.join(BASE_TERMS)})", tok.pos, self.text
            )
        self.i += 1
        fields = {"base": tok.value}
        if self.tok.value == "(" and self.tok.kind == "op":
            self.i += 1
            if self.tok.kind != "name":
                self.error("an attribute name")
            fields["attr"] = self.tok.value
            self.i += 1
            self.take(")")
        return fields

    def interaction(self) -> dict:
        tok = self.tok
        if tok.kind == "name" and tok.value == "I":
            self.i += 1
            self.take("(")
            self.take("n", "'n'")
            self.take("==")
            ntok = self.tok
            k = self.number()
            if not k.is_integer() or "." in ntok.value or "e" in ntok.value.lower():
                raise FormulaError("size indicator needs an integer literal", ntok.pos, self.text)
            self.take(")")
            return {"interaction": "size", "size": int(k)}
        if tok.kind == "name" and tok.value == "log":
            self.i += 1
            self.take("(")
            one = self.tok
            if self.number() != 1.0:
                raise FormulaError("expected log(1/n)", one.pos, self.text)
            self.take("/")
            self.take("n", "'n'")
            self.take(")")
            return {"interaction": "loginvsize"}
        self.error("'I(n == k)' or 'log(1/n)'")


def parse_formula(text: str, directed: bool = True) -> ModelSpec:
    """Parse formula text into a :class:`ModelSpec`."""
    if not isinstance(text, str) or not text.strip():
        raise FormulaError("empty formula", 0, text if isinstance(text, str) else "")
    terms, offsets = _Parser(text).formula()
    try:
        return ModelSpec(tuple(terms), tuple(offsets), directed=directed)
    except ModelError as e:
        raise FormulaError(str(e), 0, text) from None


def print_formula(model: ModelSpec) -> str:
    """Canonical text; ``parse_formula(print_formula(m), m.directed) == m``."""
    return model.formula()
