"""Parser for mini-C sources (.mc) and for pretty-printed assertions.

Concrete statement syntax, one statement per ``;``::

    stmt := "skip" | x "=" expr | x "=" "[" expr "]" | "[" expr "]" "=" expr
          | x "=" "alloc" "(" expr ")" | "free" "(" expr ")"
          | "output" "(" level "," expr ")" | x "=" "input" "(" level ")"
          | "if" "(" expr ")" block "else" block | "while" "(" expr ")" block
          | LABEL ":" stmt | x "=" f "(" args ")" | f "(" args ")"
    level := IDENT | INT
    fun   := "fun" f "(" params ")" block

A source consisting only of statements is wrapped into ``fun main() {...}``.
``>`` and ``>=`` are accepted and desugared to ``<`` / ``<=`` with swapped
operands. ``assume`` is not surface syntax. Assignment-form calls require the
callee to assign the distinguished variable ``ret``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import lang
from .lang import (
    Alloc, Assign, BinOp, Call, Command, Const, Expr, Free, FunDef, If, Input,
    Labeled, LevelLit, Load, Output, Program, Seq, Skip, Store, UnOp, Var,
    While, iter_commands, seq_of,
)
from . import assertions as asn


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "int" | "punct" | "eof"
    text: str
    line: int
    col: int


KEYWORDS = {"skip", "if", "else", "while", "fun", "alloc", "free",
            "output", "input", "assume", "exists", "emp", "false"}

# Longest match first. The assertion-only operators are tokenized always;
# they simply never occur in program sources.
_PUNCT = ["|-/->", "|->", "==>", "::", "&&", "||", "==", "!=", "<=", ">=",
          "{", "}", "(", ")", "[", "]", ";", ":", ",", "<", ">", "=",
          "+", "-", "*", "!", "~", "."]
_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)|(?P<comment>(//|#)[^\n]*)|(?P<ident>[A-Za-z_][A-Za-z0-9_']*)"
    r"|(?P<int>[0-9]+)|(?P<punct>" + "|".join(re.escape(p) for p in _PUNCT) + ")")


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    line, col, i = 1, 1, 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise ParseError(f"unexpected character {text[i]!r}", line, col)
        chunk = m.group(0)
        if m.lastgroup == "ident":
            toks.append(Token("ident", chunk, line, col))
        elif m.lastgroup == "int":
            toks.append(Token("int", chunk, line, col))
        elif m.lastgroup == "punct":
            toks.append(Token("punct", chunk, line, col))
        nl = chunk.count("\n")
        if nl:
            line += nl
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        i = m.end()
    toks.append(Token("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # -- token helpers ------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.text == text and t.kind in ("punct", "ident")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    def expect(self, text: str) -> Token:
        t = self.peek()
        if not self.at(text):
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}",
                             t.line, t.col)
        return self.next()

    def fail(self, message: str) -> ParseError:
        t = self.peek()
        return ParseError(message, t.line, t.col)

    def ident(self) -> Token:
        t = self.peek()
        if t.kind != "ident" or t.text in KEYWORDS:
            raise self.fail(f"expected identifier, found {t.text or 'end of input'!r}")
        return self.next()

    # -- expressions ---------------------------------------------------------

    def expr(self) -> Expr:
        return self._or()

    def _or(self) -> Expr:
        e = self._and()
        while self.at("||"):
            self.next()
            e = BinOp("||", e, self._and())
        return e

    def _and(self) -> Expr:
        e = self._cmp()
        while self.at("&&"):
            self.next()
            e = BinOp("&&", e, self._cmp())
        return e

    def _cmp(self) -> Expr:
        e = self._add()
        while True:
            t = self.peek()
            if t.text in ("==", "!=", "<", "<="):
                self.next()
                e = BinOp(t.text, e, self._add())
            elif t.text == ">":
                self.next()
                e = BinOp("<", self._add(), e)
            elif t.text == ">=":
                self.next()
                e = BinOp("<=", self._add(), e)
            else:
                return e

    def _add(self) -> Expr:
        e = self._mul()
        while self.peek().text in ("+", "-") and self.peek().kind == "punct":
            op = self.next().text
            e = BinOp(op, e, self._mul())
        return e

    def _mul(self) -> Expr:
        e = self._unary()
        while self.at("*"):
            self.next()
            e = BinOp("*", e, self._unary())
        return e

    def _unary(self) -> Expr:
        t = self.peek()
        if t.text in ("-", "!") and t.kind == "punct":
            self.next()
            return UnOp(t.text, self._unary())
        return self._atom()

    def _atom(self) -> Expr:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return Const(int(t.text))
        if t.kind == "ident" and t.text not in KEYWORDS:
            self.next()
            return Var(t.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        raise self.fail(f"expected expression, found {t.text or 'end of input'!r}")

    def level(self) -> Expr:
        t = self.peek()
        if t.kind == "ident" and t.text not in KEYWORDS:
            self.next()
            return LevelLit(t.text)
        if t.kind == "int":
            self.next()
            return Const(int(t.text))
        raise self.fail("expected a security level (name or integer)")

    # -- statements ----------------------------------------------------------

    def block(self) -> Command:
        self.expect("{")
        stmts: list[Command] = []
        while not self.at("}"):
            stmts.append(self.stmt())
        self.expect("}")
        return seq_of(stmts)

    def stmt(self) -> Command:
        t = self.peek()
        pos = (t.line, t.col)
        if self.accept("skip"):
            self.expect(";")
            return Skip(pos=pos)
        if self.accept("free"):
            self.expect("(")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return Free(e, pos=pos)
        if self.accept("output"):
            self.expect("(")
            lvl = self.level()
            self.expect(",")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return Output(lvl, e, pos=pos)
        if self.accept("if"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then_branch = self.block()
            self.expect("else")
            else_branch = self.block()
            return If(cond, then_branch, else_branch, pos=pos)
        if self.accept("while"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return While(cond, self.block(), pos=pos)
        if t.text == "assume":
            raise self.fail("assume is not surface syntax")
        if self.accept("["):
            addr = self.expr()
            self.expect("]")
            self.expect("=")
            val = self.expr()
            self.expect(";")
            return Store(addr, val, pos=pos)
        if t.kind == "ident" and t.text not in KEYWORDS:
            if self.peek(1).text == ":":
                label = self.next().text
                self.expect(":")
                return Labeled(label, self.stmt(), pos=pos)
            if self.peek(1).text == "(":
                func = self.next().text
                args = self._call_args()
                self.expect(";")
                return Call(None, func, args, pos=pos)
            var = self.ident().text
            self.expect("=")
            return self._assign_rhs(var, pos)
        raise self.fail(f"expected statement, found {t.text or 'end of input'!r}")

    def _assign_rhs(self, var: str, pos: tuple[int, int]) -> Command:
        if self.accept("["):
            addr = self.expr()
            self.expect("]")
            self.expect(";")
            return Load(var, addr, pos=pos)
        if self.accept("alloc"):
            self.expect("(")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return Alloc(var, e, pos=pos)
        if self.accept("input"):
            self.expect("(")
            lvl = self.level()
            self.expect(")")
            self.expect(";")
            return Input(var, lvl, pos=pos)
        t = self.peek()
        if t.kind == "ident" and t.text not in KEYWORDS and self.peek(1).text == "(":
            func = self.next().text
            args = self._call_args()
            self.expect(";")
            return Call(var, func, args, pos=pos)
        e = self.expr()
        self.expect(";")
        return Assign(var, e, pos=pos)

    def _call_args(self) -> tuple[Expr, ...]:
        self.expect("(")
        args: list[Expr] = []
        if not self.at(")"):
            args.append(self.expr())
            while self.accept(","):
                args.append(self.expr())
        self.expect(")")
        return tuple(args)

    # -- programs ------------------------------------------------------------

    def program(self) -> Program:
        funs: list[FunDef] = []
        if self.at("fun"):
            while not self.at(""):
                if self.peek().kind == "eof":
                    break
                funs.append(self.fundef())
        else:
            stmts: list[Command] = []
            while self.peek().kind != "eof":
                stmts.append(self.stmt())
            funs.append(FunDef("main", (), seq_of(stmts), pos=(1, 1)))
        t = self.peek()
        if t.kind != "eof":
            raise self.fail(f"unexpected {t.text!r}")
        return Program(tuple(funs))

    def fundef(self) -> FunDef:
        t = self.expect("fun")
        name = self.ident().text
        self.expect("(")
        params: list[str] = []
        if not self.at(")"):
            params.append(self.ident().text)
            while self.accept(","):
                params.append(self.ident().text)
        self.expect(")")
        body = self.block()
        return FunDef(name, tuple(params), body, pos=(t.line, t.col))


def _assigns_ret(body: Command) -> bool:
    return any(isinstance(c, (Assign, Load, Alloc, Input)) and c.var == "ret"
               for c in iter_commands(body))


def _check_program(p: Program) -> None:
    names = [f.name for f in p.functions]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise ParseError(f"duplicate function {dup!r}", 1, 1)
    graph: dict[str, set[str]] = {f.name: set() for f in p.functions}
    for f in p.functions:
        for c in iter_commands(f.body):
            if isinstance(c, Call):
                line, col = c.pos or (1, 1)
                if not p.has_function(c.func):
                    raise ParseError(f"unknown function {c.func!r}", line, col)
                callee = p.function(c.func)
                if len(c.args) != len(callee.params):
                    raise ParseError(
                        f"{c.func!r} expects {len(callee.params)} argument(s), "
                        f"got {len(c.args)}", line, col)
                if c.target is not None and not _assigns_ret(callee.body):
                    raise ParseError(
                        f"{c.func!r} never assigns 'ret'; cannot be used in an "
                        f"assignment", line, col)
                graph[f.name].add(c.func)
    # no recursion in v1: the call graph must be acyclic
    state: dict[str, int] = {}

    def visit(n: str) -> None:
        state[n] = 1
        for m in sorted(graph[n]):
            if state.get(m) == 1:
                raise ParseError(f"recursion involving {m!r} is not supported", 1, 1)
            if m not in state:
                visit(m)
        state[n] = 2

    for n in graph:
        if n not in state:
            visit(n)


def _number_call_sites(p: Program) -> Program:
    """Assign deterministic call-site ids (used by machine-level inlining)."""
    site = [0]

    def walk(c: Command) -> Command:
        from dataclasses import replace
        if isinstance(c, Call):
            site[0] += 1
            return replace(c, site=site[0])
        if isinstance(c, Labeled):
            return replace(c, body=walk(c.body))
        if isinstance(c, Seq):
            return replace(c, first=walk(c.first), second=walk(c.second))
        if isinstance(c, If):
            return replace(c, then_branch=walk(c.then_branch),
                           else_branch=walk(c.else_branch))
        if isinstance(c, While):
            return replace(c, body=walk(c.body))
        return c

    from dataclasses import replace
    return Program(tuple(replace(f, body=walk(f.body)) for f in p.functions))


def parse_program(text: str) -> Program:
    """Parse a full .mc source: functions (or bare statements), auto-labeled."""
    p = _Parser(text).program()
    try:
        p = lang.ensure_labels(p)
    except ValueError as e:
        raise ParseError(str(e), 1, 1) from None
    p = _number_call_sites(p)
    _check_program(p)
    return p


def parse_command(text: str) -> Command:
    """Parse a statement sequence (no auto-labeling); test/compose helper."""
    parser = _Parser(text)
    stmts: list[Command] = []
    while parser.peek().kind != "eof":
        stmts.append(parser.stmt())
    return seq_of(stmts)


def parse_expr(text: str) -> Expr:
    parser = _Parser(text)
    e = parser.expr()
    if parser.peek().kind != "eof":
        raise parser.fail("trailing input after expression")
    return e


# ---------------------------------------------------------------------------
# Assertion concrete syntax (the pretty-printer's output language)
#
#   assertion := "exists" x ("," x)* "." assertion | conj
#   conj      := atom ("*" atom)*
#   atom      := "emp" | "false" | "(" pure "==>" pure ")"
#              | expr "|->" expr | expr "|-/->"
#              | expr "::" level | expr "::" "~" level | expr
# ---------------------------------------------------------------------------

def _level_expr(parser: _Parser) -> Expr:
    t = parser.peek()
    if t.kind == "ident" and t.text not in KEYWORDS:
        parser.next()
        return LevelLit(t.text)
    return parser.expr()


def _assertion_atom(parser: _Parser) -> asn.RelAssertion:
    if parser.accept("emp"):
        return asn.Emp()
    if parser.accept("false"):
        return asn.FalseA()
    if parser.at("("):
        # lookahead: a parenthesized pure implication vs a parenthesized expr
        save = parser.i
        parser.next()
        try:
            left = _assertion_atom(parser)
            if parser.accept("==>"):
                right = _assertion_atom(parser)
                parser.expect(")")
                return asn.Pure(asn.PureImpl(asn.as_pure_atom(left),
                                             asn.as_pure_atom(right)))
        except ParseError:
            pass
        parser.i = save
    e = parser.expr()
    if parser.accept("|->"):
        return asn.PointsTo(e, parser.expr())
    if parser.accept("|-/->"):
        return asn.Invalid(e)
    if parser.accept("::"):
        if parser.accept("~"):
            return asn.Pure(asn.InsecAtom(e, _level_expr(parser)))
        return asn.Pure(asn.SecAtom(e, _level_expr(parser)))
    return asn.Pure(asn.PureExpr(e))


def _assertion(parser: _Parser) -> asn.RelAssertion:
    if parser.accept("exists"):
        names = [parser.ident().text]
        while parser.accept(","):
            names.append(parser.ident().text)
        parser.expect(".")
        body = _assertion(parser)
        for n in reversed(names):
            body = asn.Exists(n, body)
        return body
    a = _assertion_atom(parser)
    while parser.accept("*"):
        a = asn.Star(a, _assertion_atom(parser))
    return a


def parse_assertion(text: str) -> asn.RelAssertion:
    parser = _Parser(text)
    a = _assertion(parser)
    if parser.peek().kind != "eof":
        raise parser.fail("trailing input after assertion")
    return a
