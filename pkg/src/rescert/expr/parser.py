"""Recursive-descent parser for the expression grammar used in config files.

Grammar (EBNF)::

    expr     = term , { ("+" | "-") , term } ;
    term     = unary , { ("*" | "/") , unary } ;
    unary    = "-" , unary | power ;
    power    = atom , [ "^" , exponent ] ;
    exponent = [ "-" ] , INT | "(" , [ "-" ] , INT , ")" ;
    atom     = NUMBER | IDENT | FUNC1 , "(" , expr , ")"
             | FUNC2 , "(" , expr , "," , expr , ")" | "(" , expr , ")" ;
    FUNC1    = "sin" | "cos" | "tanh" | "exp" | "sqrt" ;
    FUNC2    = "min" | "max" ;
    NUMBER   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
             | "." digits [ exponent part ] ;
    IDENT    = letter , { letter | digit | "_" } ;

``^`` binds tighter than unary minus (``-x^2`` is ``-(x^2)``) and only takes
integer literals.
"""

from __future__ import annotations

import re
from typing import Sequence

from ..errors import ParseError
from .nodes import (ADD, BINARY_FUNCS, DIV, MUL, NEG, POW, UNARY_FUNCS, Expr,
                    const, var)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)


class _Tok:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind: str, text: str, pos: int):
        self.kind, self.text, self.pos = kind, text, pos


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            tok_text = m.group()
            if tok_text == "**":
                tok_text = "^"
            toks.append(_Tok(kind, tok_text, pos))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, var_names: Sequence[str]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.vars = {name: k for k, name in enumerate(var_names)}

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.pos, self.text)

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if tok.text != text or tok.kind != "op":
            what = "end of input" if tok.kind == "end" else repr(tok.text)
            self.error(f"expected {text!r}, found {what}")
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek().kind != "end":
            self.error(f"unexpected {self.peek().text!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            rhs = self.term()
            e = Expr(ADD, (e, rhs if op == "+" else Expr(NEG, (rhs,))))
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            op = self.take().text
            e = Expr(MUL if op == "*" else DIV, (e, self.unary()))
        return e

    def unary(self) -> Expr:
        if self.peek().kind == "op" and self.peek().text == "-":
            self.take()
            return Expr(NEG, (self.unary(),))
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            return Expr(POW, (base,), self.exponent())
        return base

    def exponent(self) -> int:
        paren = self.peek().kind == "op" and self.peek().text == "("
        if paren:
            self.take()
        sign = 1
        if self.peek().kind == "op" and self.peek().text == "-":
            self.take()
            sign = -1
        tok = self.peek()
        if tok.kind != "number":
            self.error("exponent must be an integer literal")
        if not tok.text.isdigit():
            self.error(f"non-integer exponent {tok.text!r}")
        self.take()
        if paren:
            self.expect(")")
        return sign * int(tok.text)

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.take()
            return const(float(tok.text))
        if tok.kind == "ident":
            self.take()
            name = tok.text
            if name in UNARY_FUNCS or name in BINARY_FUNCS:
                self.expect("(")
                first = self.expr()
                if name in BINARY_FUNCS:
                    self.expect(",")
                    second = self.expr()
                    self.expect(")")
                    return Expr(name, (first, second))
                self.expect(")")
                return Expr(name, (first,))
            if name in self.vars:
                return var(self.vars[name])
            self.error(f"unknown identifier {name!r}", tok)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "end":
            self.error("unexpected end of input")
        self.error(f"unexpected {tok.text!r}")


def parse(text: str, var_names: Sequence[str]) -> Expr:
    """Parse ``text`` into an :class:`Expr` over ``var_names`` (variable i is
    ``var_names[i]``)."""
    reserved = set(UNARY_FUNCS) | set(BINARY_FUNCS)
    for name in var_names:
        if name in reserved:
            raise ValueError(f"variable name {name!r} collides with a function name")
    return _Parser(text, var_names).parse()
