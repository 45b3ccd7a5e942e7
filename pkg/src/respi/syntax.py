"""Parsers for the term language, the sharing calculus, the type syntax, and
the process language. Whitespace-insensitive recursive descent; each parser
round-trips the corresponding canonical printer.
"""

from __future__ import annotations

import re
from typing import List, Optional, Tuple

from . import source as src
from . import sharing as shr
from . import spi
from .source import Bag, Empty, Expression, Full
from .types import (Arrow, ListType, LinCtx, MultisetType, OMEGA, StrictType,
                    TupleType, Unit, UnrCtx)


class ParseError(Exception):
    def __init__(self, message: str, pos: int, text: str):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{message} at line {line}, column {col}")
        self.pos = pos


class _Scanner:
    def __init__(self, text: str, symbols: List[str], ident_re: str):
        self.text = text
        self.toks: List[Tuple[str, str, int]] = []  # kind, value, pos
        ident = re.compile(ident_re)
        number = re.compile(r"\d+")
        i, n = 0, len(text)
        while i < n:
            c = text[i]
            if c.isspace():
                i += 1
                continue
            m = ident.match(text, i)
            if m:
                self.toks.append(("ident", m.group(0), i))
                i = m.end()
                continue
            m = number.match(text, i)
            if m:
                self.toks.append(("int", m.group(0), i))
                i = m.end()
                continue
            for s in symbols:
                if text.startswith(s, i):
                    self.toks.append(("sym", s, i))
                    i += len(s)
                    break
            else:
                raise ParseError(f"unexpected character {c!r}", i, text)
        self.toks.append(("eof", "", n))
        self.k = 0

    def peek(self, ahead: int = 0) -> Tuple[str, str]:
        t = self.toks[min(self.k + ahead, len(self.toks) - 1)]
        return t[0], t[1]

    def pos(self) -> int:
        return self.toks[min(self.k, len(self.toks) - 1)][2]

    def next(self) -> Tuple[str, str]:
        t = self.toks[self.k]
        self.k = min(self.k + 1, len(self.toks) - 1)
        return t[0], t[1]

    def expect(self, value: str) -> None:
        kind, v = self.next()
        if v != value:
            raise ParseError(f"expected {value!r}, found {v!r}", self.pos(), self.text)

    def at(self, value: str, ahead: int = 0) -> bool:
        return self.peek(ahead)[1] == value

    def eof(self) -> bool:
        return self.peek()[0] == "eof"


# ---------------------------------------------------------------------------
# Terms (source and sharing calculi share one grammar)

_TERM_SYMBOLS = ["<|", "|>", "<-", "(", ")", "[", "]", "{", "}", "\\", ".", ",",
                 ";", "/", "+", "_", "!"]
_TERM_IDENT = r"[A-Za-z_][A-Za-z0-9_']*(?!['A-Za-z0-9_])"


class _TermParser:
    def __init__(self, text: str, shar: bool):
        self.s = _Scanner(text, _TERM_SYMBOLS, r"[A-Za-z][A-Za-z0-9_']*")
        self.shar = shar

    # expression := term (+ term)*
    def expression(self) -> Expression:
        parts = [self.term()]
        while self.s.at("+"):
            self.s.next()
            parts.append(self.term())
        return Expression([(t, 1) for t in parts])

    def term(self):
        t = self.primary()
        while True:
            if self.s.at("["):
                kind = self._bracket_kind()
                if kind == "esub":
                    t = self._esub(t)
                elif kind == "share":
                    t = self._share(t)
                elif kind == "index":
                    raise ParseError("index only follows a variable", self.s.pos(), self.s.text)
                else:
                    t = self._app(t, self.bag())
            elif self.s.at("<|"):
                t = self._angle_sub(t)
            else:
                return t

    def _app(self, f, b: Bag):
        return shr.SApp(f, b) if self.shar else src.App(f, b)

    def _bracket_kind(self) -> str:
        # classify "[...": "[[" starts an explicit substitution; "[INT]" an
        # index; a top-level "<-" marks a sharing; otherwise a bag literal
        if self.s.at("[", 1):
            return "esub"
        if self.s.peek(1)[0] == "int" and self.s.at("]", 2):
            return "index"
        depth = 0
        k = 0
        while True:
            kind, v = self.s.peek(k)
            if kind == "eof":
                return "bag"
            if v == "[":
                depth += 1
            elif v == "]":
                depth -= 1
                if depth == 0:
                    return "bag"
            elif v == "<-" and depth == 1:
                return "share"
            k += 1

    def _esub(self, body):
        self.s.expect("[")
        b = self.bag()
        self.s.expect("/")
        _, x = self.s.next()
        self.s.expect("]")
        if self.shar:
            if not isinstance(body, shr.Sharing):
                raise ParseError("substitution needs a sharing-rooted body",
                                 self.s.pos(), self.s.text)
            if body.var != x:
                raise ParseError(f"substitution variable {x} differs from sharing "
                                 f"variable {body.var}", self.s.pos(), self.s.text)
            return shr.ShESub(body, b)
        return src.ESub(body, b, x)

    def _share(self, body):
        if not self.shar:
            raise ParseError("sharing construct outside the sharing calculus",
                             self.s.pos(), self.s.text)
        self.s.expect("[")
        names = []
        while not self.s.at("<-"):
            kind, v = self.s.next()
            if kind != "ident":
                raise ParseError("expected a shared variable", self.s.pos(), self.s.text)
            names.append(v)
            if self.s.at(","):
                self.s.next()
        self.s.expect("<-")
        _, x = self.s.next()
        self.s.expect("]")
        return shr.Sharing(body, tuple(names), x)

    def _angle_sub(self, body):
        if not self.shar:
            raise ParseError("explicit linear/unrestricted substitutions are "
                             "sharing-calculus syntax", self.s.pos(), self.s.text)
        self.s.expect("<|")
        # find the top-level '/' and check whether the variable has a '!'
        slots: List[object] = []
        if self.s.at("/"):
            self.s.next()
        else:
            first = None
            items = []
            while True:
                if self.s.at("_"):
                    self.s.next()
                    items.append(Empty())
                else:
                    items.append(self.term())
                if self.s.at(","):
                    self.s.next()
                    continue
                break
            self.s.expect("/")
            slots = items
        _, x = self.s.next()
        if self.s.at("!"):
            self.s.next()
            self.s.expect("|>")
            out = tuple(s if isinstance(s, Empty) else Full(s) for s in slots)
            return shr.UnrESub(body, out, x)
        self.s.expect("|>")
        if len(slots) != 1 or isinstance(slots[0], Empty):
            raise ParseError("linear substitution carries exactly one term",
                             self.s.pos(), self.s.text)
        return shr.LinESub(body, slots[0], x)

    def bag(self) -> Bag:
        self.s.expect("[")
        lin: List[object] = []
        unr: List[object] = []
        while not self.s.at(";") and not self.s.at("]"):
            lin.append(self.term())
            if self.s.at(","):
                self.s.next()
        if self.s.at(";"):
            self.s.next()
            while not self.s.at("]"):
                if self.s.at("_"):
                    self.s.next()
                    unr.append(Empty())
                else:
                    unr.append(Full(self.term()))
                if self.s.at(","):
                    self.s.next()
        self.s.expect("]")
        return Bag(tuple(lin), tuple(unr))

    def primary(self):
        kind, v = self.s.peek()
        if v == "(":
            self.s.next()
            t = self.term()
            self.s.expect(")")
            return t
        if v == "\\":
            self.s.next()
            _, x = self.s.next()
            self.s.expect(".")
            body = self.term()
            if self.shar:
                if not isinstance(body, shr.Sharing) or body.var != x:
                    raise ParseError(f"abstraction body must share {x}",
                                     self.s.pos(), self.s.text)
                return shr.SAbs(x, body)
            return src.Abs(x, body)
        if v == "fail":
            self.s.next()
            self.s.expect("{")
            names = []
            while not self.s.at("}"):
                _, n = self.s.next()
                names.append(n)
                if self.s.at(","):
                    self.s.next()
            self.s.expect("}")
            return shr.SFail(tuple(names)) if self.shar else src.Fail(tuple(names))
        if v == "ok":
            self.s.next()
            return shr.SSuccess() if self.shar else src.Success()
        if kind == "ident":
            self.s.next()
            if self.s.at("[") and self.s.peek(1)[0] == "int" and self.s.at("]", 2):
                self.s.next()
                _, i = self.s.next()
                self.s.next()
                return shr.SUnrVar(v, int(i)) if self.shar else src.UnrVar(v, int(i))
            return shr.SLinVar(v) if self.shar else src.LinVar(v)
        raise ParseError(f"unexpected token {v!r}", self.s.pos(), self.s.text)


def parse_term(text: str):
    p = _TermParser(text, shar=False)
    t = p.term()
    if not p.s.eof():
        raise ParseError("trailing input", p.s.pos(), text)
    return t


def parse_expression(text: str) -> Expression:
    p = _TermParser(text, shar=False)
    e = p.expression()
    if not p.s.eof():
        raise ParseError("trailing input", p.s.pos(), text)
    return e


def parse_sterm(text: str):
    p = _TermParser(text, shar=True)
    t = p.term()
    if not p.s.eof():
        raise ParseError("trailing input", p.s.pos(), text)
    return t


def parse_sexpression(text: str) -> Expression:
    p = _TermParser(text, shar=True)
    e = p.expression()
    if not p.s.eof():
        raise ParseError("trailing input", p.s.pos(), text)
    return e


# ---------------------------------------------------------------------------
# Types

_TYPE_SYMBOLS = ["->", "<>", "(", ")", ",", "&", ":", "!"]


class _TypeParser:
    def __init__(self, text: str):
        self.s = _Scanner(text, _TYPE_SYMBOLS, r"[A-Za-z][A-Za-z0-9_']*")

    def strict(self) -> StrictType:
        kind, v = self.s.peek()
        if v == "unit":
            self.s.next()
            return Unit()
        if v == "(":
            # either a grouped strict type or an arrow domain "(pi, eta)"
            depth = 0
            k = 0
            is_tuple = False
            while True:
                tk, tv = self.s.peek(k)
                if tk == "eof":
                    break
                if tv == "(":
                    depth += 1
                elif tv == ")":
                    depth -= 1
                    if depth == 0:
                        break
                elif tv == "," and depth == 1:
                    is_tuple = True
                k += 1
            if is_tuple:
                self.s.next()
                pi = self.multiset()
                self.s.expect(",")
                eta = self.list_type()
                self.s.expect(")")
                self.s.expect("->")
                return Arrow(TupleType(pi, eta), self.strict())
            self.s.next()
            t = self.strict()
            self.s.expect(")")
            return t
        raise ParseError(f"unexpected token {v!r} in type", self.s.pos(), self.s.text)

    def multiset(self) -> MultisetType:
        if self.s.at("w"):
            self.s.next()
            return OMEGA
        parts = [self.strict()]
        while self.s.at("&"):
            self.s.next()
            parts.append(self.strict())
        return MultisetType(tuple(parts))

    def list_type(self) -> ListType:
        parts = [self.strict()]
        while self.s.at("<>"):
            self.s.next()
            parts.append(self.strict())
        return ListType(tuple(parts))


def parse_strict(text: str) -> StrictType:
    p = _TypeParser(text)
    t = p.strict()
    if not p.s.eof():
        raise ParseError("trailing input", p.s.pos(), text)
    return t


def parse_multiset(text: str) -> MultisetType:
    p = _TypeParser(text)
    t = p.multiset()
    if not p.s.eof():
        raise ParseError("trailing input", p.s.pos(), text)
    return t


def parse_list_type(text: str) -> ListType:
    p = _TypeParser(text)
    t = p.list_type()
    if not p.s.eof():
        raise ParseError("trailing input", p.s.pos(), text)
    return t


def parse_tuple_ann(text: str) -> Tuple[Optional[StrictType], ListType]:
    """Parse a binder annotation "(pi, eta)"; returns (sigma-or-None, eta)."""
    p = _TypeParser(text)
    p.s.expect("(")
    pi = p.multiset()
    p.s.expect(",")
    eta = p.list_type()
    p.s.expect(")")
    if not p.s.eof():
        raise ParseError("trailing input", p.s.pos(), text)
    sigma = pi.parts[0] if pi.parts else None
    if pi.parts and len(set(map(repr, pi.parts))) > 1:
        raise ParseError("binder annotations use a homogeneous multiset", 0, text)
    return sigma, eta


def parse_contexts(text: str) -> Tuple[UnrCtx, LinCtx]:
    """Parse "x:tau, y:sigma, z!:eta" into linear/unrestricted contexts."""
    theta = UnrCtx()
    gamma = LinCtx()
    if not text.strip() or text.strip() == "-":
        return theta, gamma
    s = _Scanner(text, _TYPE_SYMBOLS + ["<>", ",", "w"], r"[A-Za-z][A-Za-z0-9_']*")
    while not s.eof():
        kind, name = s.next()
        if kind != "ident":
            raise ParseError("expected a variable name", s.pos(), text)
        bang = False
        if s.at("!"):
            s.next()
            bang = True
        s.expect(":")
        # collect the type text up to the next top-level comma
        depth = 0
        toks = []
        while not s.eof():
            tk, tv = s.peek()
            if tv == "(" or tv == "{":
                depth += 1
            elif tv == ")" or tv == "}":
                depth -= 1
            elif tv == "," and depth == 0:
                break
            toks.append(tv)
            s.next()
        if s.at(","):
            s.next()
        chunk = " ".join(toks)
        if bang:
            theta = theta.extended(name, parse_list_type(chunk))
        elif chunk.strip() == "w":
            gamma.add(name, None)
        else:
            gamma.add(name, parse_strict(chunk))
    return theta, gamma


# ---------------------------------------------------------------------------
# Processes and session types

_PROC_SYMBOLS = ["(+)", "!(", "?(", "(", ")", "{", "}", ".", ",", ";", ":",
                 "|", "!", "?"]
_PROC_IDENT = r"[A-Za-z_][A-Za-z0-9_']*(?:~\d+)?(?:\^[ls])?|0"
_STYPE_SYMBOLS = ["(", ")", "{", "}", "*", "@", "!", "?", "&", "+", ":", ",", "."]


class _STypeParser:
    def __init__(self, scanner: _Scanner):
        self.s = scanner

    def stype(self) -> spi.SessionType:
        kind, v = self.s.peek()
        if v == "1" or (kind == "int" and v == "1"):
            self.s.next()
            return spi.One()
        if v == "bot":
            self.s.next()
            return spi.Bot()
        if v == "!":
            self.s.next()
            return spi.Bang(self.stype())
        if v == "?":
            self.s.next()
            return spi.Query(self.stype())
        if v == "&":
            self.s.next()
            if self.s.at("{"):
                return spi.With(self._branches())
            return spi.AmpND(self.stype())
        if v == "+":
            self.s.next()
            if self.s.at("{"):
                return spi.Plus(self._branches())
            return spi.PlusND(self.stype())
        if v == "(":
            self.s.next()
            left = self.stype()
            kind, op = self.s.next()
            right = self.stype()
            self.s.expect(")")
            if op == "*":
                return spi.Tensor(left, right)
            if op == "@":
                return spi.Parr(left, right)
            raise ParseError(f"unknown type operator {op!r}", self.s.pos(), self.s.text)
        raise ParseError(f"unexpected token {v!r} in session type", self.s.pos(), self.s.text)

    def _branches(self):
        self.s.expect("{")
        out = []
        while not self.s.at("}"):
            _, label = self.s.next()
            self.s.expect(":")
            out.append((label, self.stype()))
            if self.s.at(","):
                self.s.next()
        self.s.expect("}")
        return tuple(out)


def parse_session_type(text: str) -> spi.SessionType:
    s = _Scanner(text, _STYPE_SYMBOLS, _PROC_IDENT)
    p = _STypeParser(s)
    t = p.stype()
    if not s.eof():
        raise ParseError("trailing input", s.pos(), text)
    return t


class _ProcParser:
    SYMBOLS = ["(+)", "!(", "?(", "(", ")", "{", "}", "*", "@", ".", ",", ";",
               ":", "|", "!", "?", "&", "+"]

    def __init__(self, text: str):
        self.s = _Scanner(text, self.SYMBOLS, _PROC_IDENT)

    def process(self) -> spi.Process:
        parts = [self.par()]
        while self.s.at("(+)"):
            self.s.next()
            parts.append(self.par())
        return spi.nd_sum(*parts) if len(parts) > 1 else parts[0]

    def par(self) -> spi.Process:
        parts = [self.prefix()]
        while self.s.at("|"):
            self.s.next()
            parts.append(self.prefix())
        return spi.par(*parts) if len(parts) > 1 else parts[0]

    def prefix(self) -> spi.Process:
        kind, v = self.s.peek()
        if v == "(":
            self.s.next()
            p = self.process()
            self.s.expect(")")
            return p
        if v == "0":
            self.s.next()
            return spi.Nil()
        if v == "ok":
            self.s.next()
            return spi.Tick()
        if v == "fwd":
            self.s.next()
            _, a = self.s.next()
            _, b = self.s.next()
            return spi.Fwd(a, b)
        if v == "new":
            self.s.next()
            _, name = self.s.next()
            ann = None
            if self.s.at(":"):
                self.s.next()
                ann = _STypeParser(self.s).stype()
            self.s.expect(".")
            return spi.Res(name, ann, self.prefix())
        if v == "srv":
            self.s.next()
            _, ch = self.s.next()
            self.s.expect("(")
            _, y = self.s.next()
            self.s.expect(")")
            self.s.expect(".")
            return spi.Serv(ch, y, self.prefix())
        if v == "req":
            self.s.next()
            _, ch = self.s.next()
            self.s.expect("(")
            _, y = self.s.next()
            self.s.expect(")")
            self.s.expect(".")
            return spi.Req(ch, y, self.prefix())
        if kind == "ident":
            self.s.next()
            ch = v
            if self.s.at("!("):
                self.s.next()
                _, y = self.s.next()
                self.s.expect(")")
                self.s.expect(".")
                return spi.OutB(ch, y, self.prefix())
            if self.s.at("?("):
                self.s.next()
                _, y = self.s.next()
                self.s.expect(")")
                self.s.expect(".")
                return spi.In(ch, y, self.prefix())
            if self.s.at("."):
                self.s.next()
                kind2, w = self.s.next()
                if w == "close":
                    if self.s.at("!"):
                        self.s.next()
                        return spi.CloseOut(ch)
                    self.s.expect(";")
                    return spi.CloseIn(ch, self.prefix())
                if w == "some":
                    if self.s.at("!"):
                        self.s.next()
                        self.s.expect(";")
                        return spi.SomeOut(ch, self.prefix())
                    deps: List[str] = []
                    if self.s.at("{"):
                        self.s.next()
                        while not self.s.at("}"):
                            _, d = self.s.next()
                            deps.append(d)
                            if self.s.at(","):
                                self.s.next()
                        self.s.expect("}")
                    self.s.expect(";")
                    return spi.SomeIn(ch, tuple(deps), self.prefix())
                if w == "none":
                    self.s.expect("!")
                    return spi.NoneOut(ch)
                if w == "case":
                    self.s.expect("{")
                    branches = []
                    while not self.s.at("}"):
                        _, label = self.s.next()
                        self.s.expect(":")
                        branches.append((label, self.process()))
                        if self.s.at(","):
                            self.s.next()
                    self.s.expect("}")
                    return spi.Bra(ch, tuple(branches))
                # label selection
                self.s.expect(";")
                return spi.Sel(ch, w, self.prefix())
        raise ParseError(f"unexpected token {v!r} in process", self.s.pos(), self.s.text)


def parse_process(text: str) -> spi.Process:
    p = _ProcParser(text)
    out = p.process()
    if not p.s.eof():
        raise ParseError("trailing input", p.s.pos(), text)
    return out


def parse_pi_context(text: str):
    """Parse "x: A, y: B" into a name-to-session-type mapping."""
    out = {}
    if not text.strip() or text.strip() == "-":
        return out
    s = _Scanner(text, _STYPE_SYMBOLS, _PROC_IDENT)
    while not s.eof():
        _, name = s.next()
        s.expect(":")
        out[name] = _STypeParser(s).stype()
        if s.at(","):
            s.next()
    return out
