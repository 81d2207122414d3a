"""The analyzed language: values, expressions, commands, programs.

Expressions are pure (store-only); the heap is touched exclusively by the
load/store/alloc/free commands. Values are unsigned machine integers with
wraparound at a configurable bit width. The distinguished truth value is 1:
branch conditions and assertion-level truth test equality with 1, while the
logical operators treat any nonzero operand as true and return 0/1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields, replace
from typing import Iterator, Mapping

from .lattice import SecLattice, TWO_POINT

KW_TRUE = 1


@dataclass(frozen=True)
class ValueDomain:
    """The bounded value universe: integers 0 .. 2^bits - 1, wrapping."""

    bits: int = 64

    @property
    def size(self) -> int:
        return 1 << self.bits

    def wrap(self, n: int) -> int:
        return n & (self.size - 1)

    def values(self) -> range:
        return range(self.size)

    def addresses(self) -> range:
        # 0 is never a valid heap address.
        return range(1, self.size)


DEFAULT_DOMAIN = ValueDomain(64)


class EvalError(Exception):
    """Raised on unbound variables etc. — an analysis bug, not a program bug."""


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Expr:
    def __str__(self) -> str:
        return pretty_expr(self)


@dataclass(frozen=True)
class Const(Expr):
    value: int


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class LevelLit(Expr):
    """A security-level literal such as ``low``; evaluates to the level code."""

    name: str


@dataclass(frozen=True)
class UnOp(Expr):
    op: str  # "-" | "!"
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # + - * == != < <= && ||
    lhs: Expr
    rhs: Expr


UNARY_OPS = ("-", "!")
BINARY_OPS = ("+", "-", "*", "==", "!=", "<", "<=", "&&", "||")

TRUE = Const(KW_TRUE)
FALSE = Const(0)


def negate(e: Expr) -> Expr:
    return UnOp("!", e)


def eq(a: Expr, b: Expr) -> Expr:
    return BinOp("==", a, b)


def is_true(v: int) -> bool:
    return v == KW_TRUE


def eval_expr(e: Expr, store: Mapping[str, int],
              domain: ValueDomain = DEFAULT_DOMAIN,
              lattice: SecLattice = TWO_POINT) -> int:
    """Total, deterministic evaluation of a pure expression over a store."""
    if isinstance(e, Const):
        return domain.wrap(e.value)
    if isinstance(e, Var):
        try:
            return domain.wrap(store[e.name])
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, LevelLit):
        return domain.wrap(lattice.level(e.name).code)
    if isinstance(e, UnOp):
        v = eval_expr(e.arg, store, domain, lattice)
        if e.op == "-":
            return domain.wrap(-v)
        if e.op == "!":
            return KW_TRUE if v == 0 else 0
        raise EvalError(f"unknown unary operator {e.op!r}")
    if isinstance(e, BinOp):
        a = eval_expr(e.lhs, store, domain, lattice)
        b = eval_expr(e.rhs, store, domain, lattice)
        op = e.op
        if op == "+":
            return domain.wrap(a + b)
        if op == "-":
            return domain.wrap(a - b)
        if op == "*":
            return domain.wrap(a * b)
        if op == "==":
            return KW_TRUE if a == b else 0
        if op == "!=":
            return KW_TRUE if a != b else 0
        if op == "<":
            return KW_TRUE if a < b else 0
        if op == "<=":
            return KW_TRUE if a <= b else 0
        if op == "&&":
            return KW_TRUE if a != 0 and b != 0 else 0
        if op == "||":
            return KW_TRUE if a != 0 or b != 0 else 0
        raise EvalError(f"unknown binary operator {op!r}")
    raise EvalError(f"not an expression: {e!r}")


def fv_expr(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, UnOp):
        return fv_expr(e.arg)
    if isinstance(e, BinOp):
        return fv_expr(e.lhs) | fv_expr(e.rhs)
    return frozenset()


def subst_expr(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Simultaneous substitution of variables by expressions."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, UnOp):
        return UnOp(e.op, subst_expr(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, subst_expr(e.lhs, mapping), subst_expr(e.rhs, mapping))
    return e


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Command:
    # Source position; irrelevant to syntactic identity.
    pos: tuple[int, int] | None = field(
        default=None, compare=False, repr=False, kw_only=True)

    def __str__(self) -> str:
        return pretty_command(self)


@dataclass(frozen=True)
class Skip(Command):
    pass


@dataclass(frozen=True)
class Assign(Command):
    var: str
    expr: Expr


@dataclass(frozen=True)
class Load(Command):
    """x := [addr]"""

    var: str
    addr: Expr


@dataclass(frozen=True)
class Store(Command):
    """[addr] := value"""

    addr: Expr
    value: Expr


@dataclass(frozen=True)
class Alloc(Command):
    """x := alloc(init)"""

    var: str
    init: Expr


@dataclass(frozen=True)
class Free(Command):
    addr: Expr


@dataclass(frozen=True)
class Labeled(Command):
    label: str
    body: Command


@dataclass(frozen=True)
class Seq(Command):
    first: Command
    second: Command


@dataclass(frozen=True)
class If(Command):
    cond: Expr
    then_branch: Command
    else_branch: Command


@dataclass(frozen=True)
class While(Command):
    cond: Expr
    body: Command


@dataclass(frozen=True)
class Output(Command):
    """output(level, value)"""

    level: Expr
    value: Expr


@dataclass(frozen=True)
class Input(Command):
    """x := input(level)"""

    var: str
    level: Expr


@dataclass(frozen=True)
class Assume(Command):
    """Introduced only by symbolic execution; never parsed from source."""

    cond: Expr


@dataclass(frozen=True)
class Call(Command):
    """f(args) or target := f(args); inter-procedural driver extension."""

    target: str | None
    func: str
    args: tuple[Expr, ...]
    # Parse-time call-site id, used for deterministic inlining names.
    site: int = field(default=0, compare=False, repr=False)


def unwrap_label(c: Command) -> tuple[str | None, Command]:
    label = None
    while isinstance(c, Labeled):
        label = c.label
        c = c.body
    return label, c


def strip_labels(c: Command) -> Command:
    """Remove every label wrapper, recursively (syntactic comparison helper)."""
    if isinstance(c, Labeled):
        return strip_labels(c.body)
    if isinstance(c, Seq):
        return Seq(strip_labels(c.first), strip_labels(c.second))
    if isinstance(c, If):
        return If(c.cond, strip_labels(c.then_branch), strip_labels(c.else_branch))
    if isinstance(c, While):
        return While(c.cond, strip_labels(c.body))
    return c


def commands_equal(a: Command, b: Command) -> bool:
    return strip_labels(a) == strip_labels(b)


def mods(c: Command) -> frozenset[str]:
    """Store variables a command may modify (frame-rule side condition)."""
    if isinstance(c, (Assign, Load, Alloc, Input)):
        return frozenset((c.var,))
    if isinstance(c, Call):
        return frozenset((c.target,)) if c.target else frozenset()
    if isinstance(c, Labeled):
        return mods(c.body)
    if isinstance(c, Seq):
        return mods(c.first) | mods(c.second)
    if isinstance(c, If):
        return mods(c.then_branch) | mods(c.else_branch)
    if isinstance(c, While):
        return mods(c.body)
    return frozenset()


def command_vars(c: Command) -> frozenset[str]:
    """Every variable a command reads or writes."""
    if isinstance(c, Skip):
        return frozenset()
    if isinstance(c, Assign):
        return frozenset((c.var,)) | fv_expr(c.expr)
    if isinstance(c, Load):
        return frozenset((c.var,)) | fv_expr(c.addr)
    if isinstance(c, Store):
        return fv_expr(c.addr) | fv_expr(c.value)
    if isinstance(c, Alloc):
        return frozenset((c.var,)) | fv_expr(c.init)
    if isinstance(c, Free):
        return fv_expr(c.addr)
    if isinstance(c, Labeled):
        return command_vars(c.body)
    if isinstance(c, Seq):
        return command_vars(c.first) | command_vars(c.second)
    if isinstance(c, If):
        return fv_expr(c.cond) | command_vars(c.then_branch) | command_vars(c.else_branch)
    if isinstance(c, While):
        return fv_expr(c.cond) | command_vars(c.body)
    if isinstance(c, Output):
        return fv_expr(c.level) | fv_expr(c.value)
    if isinstance(c, Input):
        return frozenset((c.var,)) | fv_expr(c.level)
    if isinstance(c, Assume):
        return fv_expr(c.cond)
    if isinstance(c, Call):
        s = frozenset((c.target,)) if c.target else frozenset()
        for a in c.args:
            s |= fv_expr(a)
        return s
    raise TypeError(f"not a command: {c!r}")


def rename_vars(c: Command, mapping: Mapping[str, str]) -> Command:
    """Rename variables in a command (used for call inlining)."""
    def r(name: str) -> str:
        return mapping.get(name, name)

    def re(e: Expr) -> Expr:
        return subst_expr(e, {k: Var(v) for k, v in mapping.items()})

    if isinstance(c, Skip):
        return c
    if isinstance(c, Assign):
        return replace(c, var=r(c.var), expr=re(c.expr))
    if isinstance(c, Load):
        return replace(c, var=r(c.var), addr=re(c.addr))
    if isinstance(c, Store):
        return replace(c, addr=re(c.addr), value=re(c.value))
    if isinstance(c, Alloc):
        return replace(c, var=r(c.var), init=re(c.init))
    if isinstance(c, Free):
        return replace(c, addr=re(c.addr))
    if isinstance(c, Labeled):
        return replace(c, body=rename_vars(c.body, mapping))
    if isinstance(c, Seq):
        return replace(c, first=rename_vars(c.first, mapping),
                       second=rename_vars(c.second, mapping))
    if isinstance(c, If):
        return replace(c, cond=re(c.cond),
                       then_branch=rename_vars(c.then_branch, mapping),
                       else_branch=rename_vars(c.else_branch, mapping))
    if isinstance(c, While):
        return replace(c, cond=re(c.cond), body=rename_vars(c.body, mapping))
    if isinstance(c, Output):
        return replace(c, level=re(c.level), value=re(c.value))
    if isinstance(c, Input):
        return replace(c, var=r(c.var), level=re(c.level))
    if isinstance(c, Assume):
        return replace(c, cond=re(c.cond))
    if isinstance(c, Call):
        return replace(c, target=r(c.target) if c.target else None,
                       args=tuple(re(a) for a in c.args))
    raise TypeError(f"not a command: {c!r}")


def seq_of(commands: list[Command]) -> Command:
    if not commands:
        return Skip()
    out = commands[-1]
    for c in reversed(commands[:-1]):
        out = Seq(c, out, pos=c.pos)
    return out


def iter_commands(c: Command) -> Iterator[Command]:
    """Preorder walk over all command nodes."""
    yield c
    if isinstance(c, Labeled):
        yield from iter_commands(c.body)
    elif isinstance(c, Seq):
        yield from iter_commands(c.first)
        yield from iter_commands(c.second)
    elif isinstance(c, If):
        yield from iter_commands(c.then_branch)
        yield from iter_commands(c.else_branch)
    elif isinstance(c, While):
        yield from iter_commands(c.body)


# ---------------------------------------------------------------------------
# Programs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunDef:
    name: str
    params: tuple[str, ...]
    body: Command
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Program:
    functions: tuple[FunDef, ...]

    def function(self, name: str) -> FunDef:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    @property
    def entries(self) -> tuple[str, ...]:
        """Functions not called by any other function."""
        called: set[str] = set()
        for f in self.functions:
            for c in iter_commands(f.body):
                if isinstance(c, Call):
                    called.add(c.func)
        return tuple(f.name for f in self.functions if f.name not in called)

    def labels(self) -> dict[str, tuple[int, int] | None]:
        out: dict[str, tuple[int, int] | None] = {}
        for f in self.functions:
            for c in iter_commands(f.body):
                if isinstance(c, Labeled):
                    out[c.label] = c.body.pos or c.pos
        return out


BUG_RELEVANT = (Load, Store, Free, Output, If, While)


def ensure_labels(program: Program) -> Program:
    """Attach fresh labels L<n> (program order) to unlabeled bug-relevant commands.

    User labels are preserved; duplicates raise ValueError. Already fully
    labeled programs come back unchanged.
    """
    used: set[str] = set()
    for f in program.functions:
        for c in iter_commands(f.body):
            if isinstance(c, Labeled):
                if c.label in used:
                    raise ValueError(f"duplicate label {c.label!r}")
                used.add(c.label)
    counter = itertools.count(1)

    def fresh() -> str:
        while True:
            name = f"L{next(counter)}"
            if name not in used:
                used.add(name)
                return name

    def walk(c: Command, labeled: bool) -> Command:
        if isinstance(c, Labeled):
            return replace(c, body=walk(c.body, True))
        if isinstance(c, Seq):
            return replace(c, first=walk(c.first, False), second=walk(c.second, False))
        if isinstance(c, If):
            c = replace(c, then_branch=walk(c.then_branch, False),
                        else_branch=walk(c.else_branch, False))
        elif isinstance(c, While):
            c = replace(c, body=walk(c.body, False))
        if not labeled and isinstance(c, BUG_RELEVANT):
            return Labeled(fresh(), c, pos=c.pos)
        return c

    funs = tuple(replace(f, body=walk(f.body, False)) for f in program.functions)
    return Program(funs)


# ---------------------------------------------------------------------------
# Pretty printing (parse . pretty == identity on ASTs)
# ---------------------------------------------------------------------------

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, "<=": 4,
         "+": 5, "-": 5, "*": 6}


def pretty_expr(e: Expr, prec: int = 0) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, LevelLit):
        return e.name
    if isinstance(e, UnOp):
        inner = pretty_expr(e.arg, 7)
        s = f"{e.op}{inner}"
        return f"({s})" if prec > 7 else s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        # left-associative: right operand needs strictly higher precedence
        s = f"{pretty_expr(e.lhs, p)} {e.op} {pretty_expr(e.rhs, p + 1)}"
        return f"({s})" if prec > p else s
    raise TypeError(f"not an expression: {e!r}")


def pretty_level(e: Expr) -> str:
    return pretty_expr(e)


def pretty_command(c: Command, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(c, Seq):
        return f"{pretty_command(c.first, indent)}\n{pretty_command(c.second, indent)}"
    if isinstance(c, Labeled):
        inner = pretty_command(c.body, indent)
        return f"{pad}{c.label}: {inner.lstrip()}"
    if isinstance(c, Skip):
        return f"{pad}skip;"
    if isinstance(c, Assign):
        return f"{pad}{c.var} = {pretty_expr(c.expr)};"
    if isinstance(c, Load):
        return f"{pad}{c.var} = [{pretty_expr(c.addr)}];"
    if isinstance(c, Store):
        return f"{pad}[{pretty_expr(c.addr)}] = {pretty_expr(c.value)};"
    if isinstance(c, Alloc):
        return f"{pad}{c.var} = alloc({pretty_expr(c.init)});"
    if isinstance(c, Free):
        return f"{pad}free({pretty_expr(c.addr)});"
    if isinstance(c, Output):
        return f"{pad}output({pretty_level(c.level)}, {pretty_expr(c.value)});"
    if isinstance(c, Input):
        return f"{pad}{c.var} = input({pretty_level(c.level)});"
    if isinstance(c, Assume):
        return f"{pad}assume({pretty_expr(c.cond)});"
    if isinstance(c, If):
        t = pretty_command(c.then_branch, indent + 1)
        e = pretty_command(c.else_branch, indent + 1)
        return (f"{pad}if ({pretty_expr(c.cond)}) {{\n{t}\n{pad}}} "
                f"else {{\n{e}\n{pad}}}")
    if isinstance(c, While):
        b = pretty_command(c.body, indent + 1)
        return f"{pad}while ({pretty_expr(c.cond)}) {{\n{b}\n{pad}}}"
    if isinstance(c, Call):
        args = ", ".join(pretty_expr(a) for a in c.args)
        call = f"{c.func}({args});"
        return f"{pad}{c.target} = {call}" if c.target else f"{pad}{call}"
    raise TypeError(f"not a command: {c!r}")


def pretty_program(p: Program) -> str:
    chunks = []
    for f in p.functions:
        params = ", ".join(f.params)
        chunks.append(f"fun {f.name}({params}) {{\n{pretty_command(f.body, 1)}\n}}")
    return "\n\n".join(chunks) + "\n"
