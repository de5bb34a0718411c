"""Parameterized programs: control-flow graphs of a fixed command language.

One program text is executed by arbitrarily many identical threads; a
trace interleaves commands tagged with the id of the executing thread.
Commands range over linear integer arithmetic: simultaneous assignments,
non-deterministic assignment with an optional lower bound (``pos()`` is
havoc bounded below by 1), assumptions, and skip.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from . import qpa as Q
from .terms import Atom, Term, Var, parse_term

ASSIGN = "assign"
HAVOC = "havoc"
ASSUME = "assume"
SKIP = "skip"


@dataclass(frozen=True)
class Command:
    name: str
    kind: str
    assigns: tuple[tuple[Var, Term], ...] = ()
    havoc_var: Var | None = None
    havoc_lower: int | None = None
    guard: Atom | None = None

    def __str__(self) -> str:
        return self.name

    @property
    def written(self) -> frozenset[Var]:
        if self.kind == ASSIGN:
            return frozenset(v for v, _ in self.assigns)
        if self.kind == HAVOC:
            return frozenset({self.havoc_var})
        return frozenset()

    @property
    def read(self) -> frozenset[Var]:
        if self.kind == ASSIGN:
            out: set[Var] = set()
            for _, t in self.assigns:
                out |= t.vars
            return frozenset(out)
        if self.kind == ASSUME:
            return self.guard.vars
        return frozenset()

    @property
    def mentioned(self) -> frozenset[Var]:
        return self.read | self.written


@dataclass(frozen=True)
class IndexedCommand:
    command: Command
    thread: int

    def __post_init__(self) -> None:
        if self.thread < 1:
            raise ValueError("thread ids are 1-based")

    def __str__(self) -> str:
        return f"{self.command.name}@{self.thread}"

    def localize(self, var: Var) -> Var:
        """Resolve an unindexed local to the executing thread's copy."""
        if var.kind == "l" and var.tid is None:
            return var.with_tid(self.thread)
        return var

    @property
    def written(self) -> frozenset[Var]:
        return frozenset(self.localize(v) for v in self.command.written)

    @property
    def mentioned(self) -> frozenset[Var]:
        return frozenset(self.localize(v) for v in self.command.mentioned)


@dataclass(frozen=True)
class Lasso:
    """Finite stand-in tau $ rho for the ultimately periodic trace tau.rho^w."""

    stem: tuple[IndexedCommand, ...]
    loop: tuple[IndexedCommand, ...]

    @property
    def threads(self) -> frozenset[int]:
        return frozenset(ic.thread for ic in self.stem + self.loop)

    def word(self) -> tuple[tuple[str, int | None], ...]:
        out = [(ic.command.name, ic.thread) for ic in self.stem]
        out.append((Q.DOLLAR, None))
        out.extend((ic.command.name, ic.thread) for ic in self.loop)
        return tuple(out)

    def __str__(self) -> str:
        stem = " ".join(map(str, self.stem))
        loop = " ".join(map(str, self.loop))
        return f"{stem} $ {loop}".strip()


@dataclass(frozen=True)
class ProgramState:
    n_threads: int
    globals_: tuple[tuple[str, int], ...]
    locals_: tuple[tuple[tuple[str, int], int], ...]
    locations: tuple[int, ...]

    @staticmethod
    def make(
        n_threads: int,
        globals_: Mapping[str, int],
        locals_: Mapping[tuple[str, int], int],
        locations: Sequence[int],
    ) -> "ProgramState":
        if len(locations) != n_threads:
            raise ValueError("every thread needs a location")
        return ProgramState(
            n_threads,
            tuple(sorted(globals_.items())),
            tuple(sorted(locals_.items())),
            tuple(locations),
        )

    def global_map(self) -> dict[str, int]:
        return dict(self.globals_)

    def local_map(self) -> dict[tuple[str, int], int]:
        return dict(self.locals_)

    def value(self, var: Var) -> int:
        if var.old:
            raise ValueError("old() references need an explicit old state")
        if var.kind == "g":
            for name, v in self.globals_:
                if name == var.name:
                    return v
            raise KeyError(f"undeclared global {var.name!r}")
        if var.tid is None or var.tid > self.n_threads:
            raise ValueError(f"unbound thread index in {var}")
        for key, v in self.locals_:
            if key == (var.name, var.tid):
                return v
        raise KeyError(f"undeclared local {var.name}({var.tid})")

    def location(self, thread: int) -> int:
        return self.locations[thread - 1]


class ProgramError(ValueError):
    pass


@dataclass(frozen=True)
class ParameterizedProgram:
    locations: tuple[int, ...]
    commands: tuple[Command, ...]
    initial: int
    src: tuple[int, ...]  # parallel to commands
    tgt: tuple[int, ...]
    globals_: tuple[str, ...]
    locals_: tuple[str, ...]

    def __post_init__(self) -> None:
        locs = set(self.locations)
        if self.initial not in locs:
            raise ProgramError("initial location is not declared")
        names = [c.name for c in self.commands]
        if len(set(names)) != len(names):
            raise ProgramError("command names must be unique")
        for s, t in zip(self.src, self.tgt):
            if s not in locs or t not in locs:
                raise ProgramError("command endpoints must be declared locations")

    def command(self, name: str) -> Command:
        for c in self.commands:
            if c.name == name:
                return c
        raise KeyError(f"no command named {name!r}")

    def src_of(self, cmd: Command) -> int:
        return self.src[self.commands.index(cmd)]

    def tgt_of(self, cmd: Command) -> int:
        return self.tgt[self.commands.index(cmd)]

    @property
    def alphabet(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.commands) + (Q.DOLLAR,)

    def initial_state(self, n_threads: int) -> ProgramState:
        return ProgramState.make(
            n_threads,
            {g: 0 for g in self.globals_},
            {(l, i): 0 for l in self.locals_ for i in range(1, n_threads + 1)},
            [self.initial] * n_threads,
        )


DEFAULT_HAVOC_RANGE = (-8, 8)


def havoc_values(lower: int | None, havoc_range: tuple[int, int] = DEFAULT_HAVOC_RANGE) -> list[int]:
    lo, hi = havoc_range
    if lower is not None:
        lo = max(lo, lower)
    return list(range(lo, hi + 1))


def data_step(
    state: ProgramState,
    ic: IndexedCommand,
    havoc_range: tuple[int, int] = DEFAULT_HAVOC_RANGE,
) -> list[tuple[dict[str, int], dict[tuple[str, int], int]]]:
    """Successor data valuations, ignoring control flow. Empty = blocked."""
    cmd = ic.command

    def val(var: Var) -> int:
        return state.value(ic.localize(var))

    g = state.global_map()
    l = state.local_map()
    if cmd.kind == SKIP:
        return [(g, l)]
    if cmd.kind == ASSUME:
        return [(g, l)] if cmd.guard.evaluate(val) else []
    if cmd.kind == ASSIGN:
        values = [t.evaluate(val) for _, t in cmd.assigns]
        for (var, _), value in zip(cmd.assigns, values):
            var = ic.localize(var)
            if var.kind == "g":
                g[var.name] = value
            else:
                l[(var.name, var.tid)] = value
        return [(g, l)]
    out = []
    var = ic.localize(cmd.havoc_var)
    for value in havoc_values(cmd.havoc_lower, havoc_range):
        g2, l2 = dict(g), dict(l)
        if var.kind == "g":
            g2[var.name] = value
        else:
            l2[(var.name, var.tid)] = value
        out.append((g2, l2))
    return out


def cfg_step(
    program: ParameterizedProgram,
    state: ProgramState,
    ic: IndexedCommand,
    havoc_range: tuple[int, int] = DEFAULT_HAVOC_RANGE,
) -> frozenset[ProgramState]:
    """One interleaving step; the empty set encodes blocking."""
    if ic.thread > state.n_threads:
        raise ValueError(f"thread {ic.thread} exceeds the instantiation size")
    if state.location(ic.thread) != program.src_of(ic.command):
        return frozenset()
    locations = list(state.locations)
    locations[ic.thread - 1] = program.tgt_of(ic.command)
    return frozenset(
        ProgramState.make(state.n_threads, g, l, locations)
        for g, l in data_step(state, ic, havoc_range)
    )


def project_thread(word: Iterable[IndexedCommand], thread: int) -> tuple[Command, ...]:
    """Order-preserving filter of the commands executed by one thread."""
    return tuple(ic.command for ic in word if ic.thread == thread)


def _is_path(program: ParameterizedProgram, cmds: Sequence[Command], start: int) -> int | None:
    """Ending location when cmds form a path from start, else None."""
    loc = start
    for cmd in cmds:
        if program.src_of(cmd) != loc:
            return None
        loc = program.tgt_of(cmd)
    return loc


def is_program_lasso(program: ParameterizedProgram, lasso: Lasso) -> bool:
    """The definitional check behind the program lasso automaton.

    Every thread's stem projection must be a path from the initial
    location, and its loop projection a (possibly empty) cycle at the
    location the stem reached; additionally the loop as a whole is
    nonempty.
    """
    if not lasso.loop:
        return False
    for thread in lasso.threads:
        end = _is_path(program, project_thread(lasso.stem, thread), program.initial)
        if end is None:
            return False
        back = _is_path(program, project_thread(lasso.loop, thread), end)
        if back is None or back != end:
            return False
    return True


def enumerate_program_lassos(
    program: ParameterizedProgram,
    n_threads: int,
    stem_max: int,
    loop_max: int,
) -> Iterator[Lasso]:
    """All program lassos within the bounds, in length-lexicographic order.

    Ordered by total length, then stem length, then stem and loop
    lexicographically (commands in declaration order, smaller thread ids
    first).
    """
    if stem_max < 0 or loop_max < 1:
        raise ValueError("need stem_max >= 0 and loop_max >= 1")
    letters = [
        IndexedCommand(cmd, tid) for cmd in program.commands for tid in range(1, n_threads + 1)
    ]
    letters.sort(key=lambda ic: (program.commands.index(ic.command), ic.thread))

    def stems(length: int, locs: dict[int, int], acc: list[IndexedCommand]):
        if length == 0:
            yield tuple(acc), dict(locs)
            return
        for ic in letters:
            here = locs.get(ic.thread, program.initial)
            if program.src_of(ic.command) != here:
                continue
            locs[ic.thread] = program.tgt_of(ic.command)
            acc.append(ic)
            yield from stems(length - 1, locs, acc)
            acc.pop()
            locs[ic.thread] = here

    def loops(length: int, anchor: dict[int, int], locs: dict[int, int], acc: list[IndexedCommand]):
        if length == 0:
            if all(locs[t] == anchor.get(t, program.initial) for t in locs):
                yield tuple(acc)
            return
        for ic in letters:
            here = locs.get(ic.thread, anchor.get(ic.thread, program.initial))
            if program.src_of(ic.command) != here:
                continue
            prev = dict(locs)
            locs[ic.thread] = program.tgt_of(ic.command)
            acc.append(ic)
            yield from loops(length - 1, anchor, locs, acc)
            acc.pop()
            locs.clear()
            locs.update(prev)
    for total in range(1, stem_max + loop_max + 1):
        for stem_len in range(0, min(stem_max, total - 1) + 1):
            loop_len = total - stem_len
            if loop_len < 1 or loop_len > loop_max:
                continue
            for stem, locs in stems(stem_len, {}, []):
                for loop in loops(loop_len, locs, {}, []):
                    yield Lasso(stem, loop)


# --- the program lasso automaton ---------------------------------------------


def program_lasso_qpa(program: ParameterizedProgram) -> Q.Qpa:
    """Automaton accepting exactly the one-dollar lasso words of the program.

    Reading right to left, a monadic fact tracks each thread's current
    location; pair predicates additionally remember where the thread's
    loop must close, and the dollar transition insists that it does.
    """

    def L(loc: int) -> str:
        return f"L{loc}"

    def LL(a: int, b: int) -> str:
        return f"LL{a}_{b}"

    arity: dict[str, int] = {"NoDollar": 0, "Delta": 1, "AnyLoc": 1}
    for a in program.locations:
        arity[L(a)] = 1
        for b in program.locations:
            arity[LL(a, b)] = 1
    delta: dict[tuple[str, str], Q.Formula] = {}
    i0, i1 = "i0", "i1"
    for cmd, s, t in zip(program.commands, program.src, program.tgt):
        letter = cmd.name
        for a in program.locations:
            if a == t:
                move = Q.for_([Q.fand([Q.eq(i0, i1), Pred1(L(s), i1)]), Q.fand([Q.neq(i0, i1), Pred1(L(a), i1)])])
            else:
                move = Q.fand([Q.neq(i0, i1), Pred1(L(a), i1)])
            delta[(L(a), letter)] = move
            for b in program.locations:
                if a == t:
                    move2 = Q.for_(
                        [
                            Q.fand([Q.eq(i0, i1), Pred1(LL(s, b), i1)]),
                            Q.fand([Q.neq(i0, i1), Pred1(LL(a, b), i1)]),
                        ]
                    )
                else:
                    move2 = Q.fand([Q.neq(i0, i1), Pred1(LL(a, b), i1)])
                delta[(LL(a, b), letter)] = move2
        delta[("Delta", letter)] = Q.for_(
            [Q.fand([Q.eq(i0, i1), Pred1(LL(s, t), i1)]), Q.fand([Q.neq(i0, i1), Pred1("Delta", i1)])]
        )
        delta[("AnyLoc", letter)] = Q.for_(
            [Q.fand([Q.eq(i0, i1), Pred1(L(s), i1)]), Q.fand([Q.neq(i0, i1), Pred1("AnyLoc", i1)])]
        )
        delta[("NoDollar", letter)] = Q.TRUE_F
    for a in program.locations:
        delta[(L(a), Q.DOLLAR)] = Q.FALSE_F
        for b in program.locations:
            delta[(LL(a, b), Q.DOLLAR)] = Pred1(L(a), i1) if a == b else Q.FALSE_F
    delta[("Delta", Q.DOLLAR)] = Pred1("AnyLoc", i1)
    delta[("AnyLoc", Q.DOLLAR)] = Q.FALSE_F
    delta[("NoDollar", Q.DOLLAR)] = Q.FALSE_F
    start = Q.fand([Q.Pred("NoDollar", ()), Q.Quant("forall", "v", Pred1("Delta", "v"))])
    accepting = frozenset({L(program.initial), "AnyLoc"})
    return Q.Qpa(arity, program.alphabet, delta, start, accepting)


def Pred1(name: str, var: str) -> Q.Pred:
    return Q.Pred(name, (var,))


# --- textual front end ---------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(\+\+|<=|>=|==|!=|&&|\|\||[A-Za-z_][A-Za-z_0-9]*|\d+|[-+*/(){};,<>=!])"
)

_KEYWORDS = {"global", "local", "int", "nat", "while", "if", "else", "assume", "skip", "true", "false", "pos", "havoc"}

_NEGATED = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "=": "!=", "!=": "=="}


class SyntaxIssue(ProgramError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class _Lexer:
    def __init__(self, text: str):
        self.tokens: list[tuple[str, int, int]] = []
        line, col = 1, 1
        pos = 0
        while pos < len(text):
            if text[pos] == "\n":
                line += 1
                col = 1
                pos += 1
                continue
            if text[pos].isspace():
                col += 1
                pos += 1
                continue
            if text.startswith("//", pos) or text.startswith("#", pos):
                nl = text.find("\n", pos)
                pos = len(text) if nl < 0 else nl
                continue
            m = _TOKEN_RE.match(text, pos)
            if not m or m.start(1) != pos:
                raise SyntaxIssue(f"unexpected character {text[pos]!r}", line, col)
            tok = m.group(1)
            self.tokens.append((tok, line, col))
            col += m.end() - pos
            pos = m.end()
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def location(self) -> tuple[int, int]:
        if self.pos < len(self.tokens):
            _, line, col = self.tokens[self.pos]
            return line, col
        if self.tokens:
            _, line, col = self.tokens[-1]
            return line, col
        return 1, 1

    def take(self, expected: str | None = None) -> str:
        line, col = self.location()
        if self.pos >= len(self.tokens):
            raise SyntaxIssue("unexpected end of input", line, col)
        tok = self.tokens[self.pos][0]
        if expected is not None and tok != expected:
            raise SyntaxIssue(f"expected {expected!r}, found {tok!r}", line, col)
        self.pos += 1
        return tok


@dataclass
class _Cmp:
    left_text: str
    op: str
    right_text: str
    left: Term
    right: Term

    def atom(self) -> Atom:
        return Atom.cmp(self.left, self.right, "=" if self.op == "==" else self.op)

    def negated_atom(self) -> Atom:
        return Atom.cmp(self.left, self.right, _NEGATED[self.op].replace("==", "="))

    def text(self, negate: bool = False) -> str:
        op = _NEGATED[self.op] if negate else self.op
        return f"[{self.left_text}{op}{self.right_text}]"


class _ProgramParser:
    def __init__(self, text: str):
        self.lex = _Lexer(text)
        self.globals: list[str] = []
        self.locals: list[str] = []

    # variables used in commands: globals by name, locals unindexed
    def _var(self, name: str) -> Var:
        if name in self.globals:
            return Var.g(name)
        if name in self.locals:
            return Var.l(name, None)
        line, col = self.lex.location()
        raise SyntaxIssue(f"undeclared variable {name!r}", line, col)

    def parse(self) -> list:
        while self.lex.peek() in ("global", "local"):
            scope = self.lex.take()
            self.lex.take()  # type keyword (int / nat)
            names = [self.lex.take()]
            while self.lex.peek() == ",":
                self.lex.take()
                names.append(self.lex.take())
            self.lex.take(";")
            (self.globals if scope == "global" else self.locals).extend(names)
        stmts = self.statements(stop=None)
        if self.lex.peek() is not None:
            line, col = self.lex.location()
            raise SyntaxIssue(f"unexpected token {self.lex.peek()!r}", line, col)
        return stmts

    def statements(self, stop: str | None) -> list:
        out = []
        while self.lex.peek() is not None and self.lex.peek() != stop:
            out.append(self.statement())
        return out

    def statement(self):
        tok = self.lex.peek()
        if tok == "skip":
            self.lex.take()
            self.lex.take(";")
            return ("skip",)
        if tok == "assume":
            self.lex.take()
            cmp_ = self.comparison()
            self.lex.take(";")
            return ("assume", cmp_)
        if tok == "while":
            self.lex.take()
            self.lex.take("(")
            cond = self.condition()
            self.lex.take(")")
            body = self.block()
            return ("while", cond, body)
        if tok == "if":
            self.lex.take()
            self.lex.take("(")
            cond = self.condition()
            self.lex.take(")")
            then = self.block()
            other = []
            if self.lex.peek() == "else":
                self.lex.take()
                other = self.block()
            return ("if", cond, then, other)
        # assignment forms
        name = self.lex.take()
        if not name.isidentifier() or name in _KEYWORDS:
            line, col = self.lex.location()
            raise SyntaxIssue(f"unexpected token {name!r}", line, col)
        target = self._var(name)
        if self.lex.peek() == "++":
            self.lex.take()
            self.lex.take(";")
            return ("postinc", target, None, f"{name}++")
        self.lex.take("=")
        if self.lex.peek() in ("pos", "havoc"):
            which = self.lex.take()
            self.lex.take("(")
            self.lex.take(")")
            self.lex.take(";")
            return ("havoc", target, 1 if which == "pos" else None, f"{name}={which}()")
        mark = self.lex.pos
        rhs_name = self.lex.peek()
        if rhs_name and rhs_name.isidentifier() and rhs_name not in _KEYWORDS:
            self.lex.take()
            if self.lex.peek() == "++":
                self.lex.take()
                self.lex.take(";")
                return ("postinc", target, self._var(rhs_name), f"{name}={rhs_name}++")
            self.lex.pos = mark
        text, term = self.expression()
        self.lex.take(";")
        return ("set", target, term, f"{name}={text}")

    def block(self) -> list:
        self.lex.take("{")
        body = self.statements(stop="}")
        self.lex.take("}")
        return body

    def condition(self):
        if self.lex.peek() in ("true", "false"):
            return self.lex.take()
        return self.comparison()

    def comparison(self) -> _Cmp:
        left_text, left = self.expression()
        op = self.lex.take()
        if op not in ("<", "<=", ">", ">=", "==", "=", "!="):
            line, col = self.lex.location()
            raise SyntaxIssue(f"expected a comparison operator, found {op!r}", line, col)
        right_text, right = self.expression()
        return _Cmp(left_text, "==" if op == "=" else op, right_text, left, right)

    def expression(self) -> tuple[str, Term]:
        tokens: list[str] = []
        depth = 0
        while True:
            tok = self.lex.peek()
            if tok is None:
                break
            if tok == "(":
                depth += 1
            elif tok == ")":
                if depth == 0:
                    break
                depth -= 1
            elif depth == 0 and tok in (";", ",", "<", "<=", ">", ">=", "==", "=", "!=", "{"):
                break
            tokens.append(self.lex.take())
        text = "".join(tokens)
        if not text:
            line, col = self.lex.location()
            raise SyntaxIssue("expected an expression", line, col)
        try:
            term = parse_term(text)
        except ValueError as err:
            line, col = self.lex.location()
            raise SyntaxIssue(str(err), line, col) from None
        for var in term.vars:
            if var.old:
                line, col = self.lex.location()
                raise SyntaxIssue("old() is not allowed in program text", line, col)
            self._check_declared(var)
        return text, term.map_vars(self._classify)

    def _check_declared(self, var: Var) -> None:
        if var.tid is not None:
            line, col = self.lex.location()
            raise SyntaxIssue("explicit thread indices are not allowed in program text", line, col)
        if var.name not in self.globals and var.name not in self.locals:
            line, col = self.lex.location()
            raise SyntaxIssue(f"undeclared variable {var.name!r}", line, col)

    def _classify(self, var: Var) -> Var:
        if var.name in self.locals:
            return Var.l(var.name, None)
        return Var.g(var.name)


class _CfgBuilder:
    def __init__(self):
        self.counter = 0
        self.edges: list[tuple[Command, int, int, bool]] = []  # (cmd, src, tgt, is_exit_guard)
        self.names: dict[str, int] = {}

    def fresh(self) -> int:
        self.counter += 1
        return self.counter

    def unique(self, name: str) -> str:
        n = self.names.get(name, 0) + 1
        self.names[name] = n
        return name if n == 1 else f"{name}#{n}"

    def edge(self, cmd: Command, src: int, tgt: int, exit_guard: bool = False) -> None:
        self.edges.append((cmd, src, tgt, exit_guard))

    def merge(self, old: int, new: int) -> None:
        self.edges = [
            (c, new if s == old else s, new if t == old else t, x) for c, s, t, x in self.edges
        ]


def _compile(stmts: list, builder: _CfgBuilder, entry: int) -> int:
    cur = entry
    for st in stmts:
        cur = _compile_stmt(st, builder, cur)
    return cur


def _only_skip(body: list) -> bool:
    return len(body) == 1 and body[0][0] == "skip"


def _compile_stmt(st, builder: _CfgBuilder, cur: int) -> int:
    kind = st[0]
    if kind == "skip":
        nxt = builder.fresh()
        builder.edge(Command(builder.unique("skip"), SKIP), cur, nxt)
        return nxt
    if kind == "assume":
        cmp_: _Cmp = st[1]
        nxt = builder.fresh()
        builder.edge(Command(builder.unique(cmp_.text()), ASSUME, guard=cmp_.atom()), cur, nxt)
        return nxt
    if kind == "set":
        _, target, term, text = st
        nxt = builder.fresh()
        builder.edge(Command(builder.unique(text), ASSIGN, assigns=((target, term),)), cur, nxt)
        return nxt
    if kind == "havoc":
        _, target, lower, text = st
        nxt = builder.fresh()
        builder.edge(Command(builder.unique(text), HAVOC, havoc_var=target, havoc_lower=lower), cur, nxt)
        return nxt
    if kind == "postinc":
        _, target, source, text = st
        nxt = builder.fresh()
        if source is None:  # x++
            assigns = ((target, Term.of(target) + Term.constant(1)),)
        else:  # x = y++ : simultaneous read and increment
            assigns = ((target, Term.of(source)), (source, Term.of(source) + Term.constant(1)))
        builder.edge(Command(builder.unique(text), ASSIGN, assigns=assigns), cur, nxt)
        return nxt
    if kind == "while":
        _, cond, body = st
        head = cur
        if cond == "true":
            if _only_skip(body):
                builder.edge(Command(builder.unique("skip"), SKIP), head, head)
            else:
                inner = _compile(body, builder, head)
                builder.merge(inner, head)
            return builder.fresh()  # unreachable exit; pruned later
        if cond == "false":
            return head
        guard = Command(builder.unique(cond.text()), ASSUME, guard=cond.atom())
        if _only_skip(body):
            builder.edge(guard, head, head)
        else:
            body_entry = builder.fresh()
            builder.edge(guard, head, body_entry)
            inner = _compile(body, builder, body_entry)
            builder.merge(inner, head)
        exit_loc = builder.fresh()
        neg = Command(builder.unique(cond.text(negate=True)), ASSUME, guard=cond.negated_atom())
        builder.edge(neg, head, exit_loc, exit_guard=True)
        return exit_loc
    if kind == "if":
        _, cond, then, other = st
        if cond in ("true", "false"):
            return _compile(then if cond == "true" else other, builder, cur)
        then_entry = builder.fresh()
        builder.edge(Command(builder.unique(cond.text()), ASSUME, guard=cond.atom()), cur, then_entry)
        then_exit = _compile(then, builder, then_entry)
        else_entry = builder.fresh()
        builder.edge(
            Command(builder.unique(cond.text(negate=True)), ASSUME, guard=cond.negated_atom()),
            cur,
            else_entry,
        )
        else_exit = _compile(other, builder, else_entry)
        builder.merge(else_exit, then_exit)
        return then_exit
    raise AssertionError(f"unknown statement {kind!r}")


def parse_program(text: str) -> ParameterizedProgram:
    """Compile structured source (or the raw CFG format) into a program."""
    if re.search(r"^\s*(loc|init|edge)\b", text, re.MULTILINE):
        return _parse_raw_cfg(text)
    parser = _ProgramParser(text)
    stmts = parser.parse()
    builder = _CfgBuilder()
    builder.counter = 1
    init = 1
    _compile(stmts, builder, init)
    # drop loop-exit targets that lead nowhere (the paper-style CFGs leave
    # the final while exit implicit)
    while True:
        outgoing = {s for _, s, _, _ in builder.edges}
        dead = None
        for cmd, s, t, exit_guard in builder.edges:
            if exit_guard and t not in outgoing and t != init:
                dead = t
                break
        if dead is None:
            break
        builder.edges = [e for e in builder.edges if not (e[3] and e[2] == dead)]
    used = sorted({s for _, s, _, _ in builder.edges} | {t for _, _, t, _ in builder.edges} | {init})
    renumber = {loc: i + 1 for i, loc in enumerate(used)}
    commands = tuple(c for c, _, _, _ in builder.edges)
    return ParameterizedProgram(
        locations=tuple(renumber[l] for l in used),
        commands=commands,
        initial=renumber[init],
        src=tuple(renumber[s] for _, s, _, _ in builder.edges),
        tgt=tuple(renumber[t] for _, _, t, _ in builder.edges),
        globals_=tuple(parser.globals),
        locals_=tuple(parser.locals),
    )


def parse_command(text: str, globals_: Sequence[str], locals_: Sequence[str]) -> Command:
    """A single command in the spelling used by lassos and basis files."""
    text = text.strip()

    def classify(var: Var) -> Var:
        if var.name in locals_:
            return Var.l(var.name, var.tid)
        if var.name in globals_:
            if var.tid is not None:
                raise ValueError(f"global {var.name!r} cannot be indexed")
            return Var.g(var.name)
        raise ValueError(f"undeclared variable {var.name!r}")

    if text == "skip" or re.fullmatch(r"skip#\d+", text):
        return Command(text, SKIP)
    if text.startswith("[") and text.endswith("]"):
        from .terms import parse_atom

        atom = parse_atom(text[1:-1]).map_vars(classify)
        return Command(text.replace(" ", ""), ASSUME, guard=atom)
    m = re.fullmatch(r"([A-Za-z_][A-Za-z_0-9]*)\s*=\s*(pos|havoc)\(\)", text)
    if m:
        name, which = m.groups()
        return Command(
            f"{name}={which}()", HAVOC, havoc_var=classify(Var.g(name)), havoc_lower=1 if which == "pos" else None
        )
    m = re.fullmatch(r"([A-Za-z_][A-Za-z_0-9]*)\s*=\s*([A-Za-z_][A-Za-z_0-9]*)\+\+", text)
    if m:
        tname, sname = m.groups()
        target, source = classify(Var.g(tname)), classify(Var.g(sname))
        return Command(
            f"{tname}={sname}++",
            ASSIGN,
            assigns=((target, Term.of(source)), (source, Term.of(source) + Term.constant(1))),
        )
    m = re.fullmatch(r"([A-Za-z_][A-Za-z_0-9]*)\+\+", text)
    if m:
        name = m.group(1)
        target = classify(Var.g(name))
        return Command(f"{name}++", ASSIGN, assigns=((target, Term.of(target) + Term.constant(1)),))
    m = re.fullmatch(r"([A-Za-z_][A-Za-z_0-9]*)\s*=\s*(.+)", text)
    if m:
        name, rhs = m.groups()
        term = parse_term(rhs).map_vars(classify)
        return Command(
            f"{name}={rhs.replace(' ', '')}", ASSIGN, assigns=((classify(Var.g(name)), term),)
        )
    raise ValueError(f"cannot parse command {text!r}")


def _parse_raw_cfg(text: str) -> ParameterizedProgram:
    locations: list[str] = []
    initial: str | None = None
    globals_: list[str] = []
    locals_: list[str] = []
    edges: list[tuple[str, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        directive = parts[0]
        rest = parts[1] if len(parts) > 1 else ""
        if directive == "loc":
            locations.append(rest.strip())
        elif directive == "init":
            initial = rest.strip()
        elif directive == "global":
            globals_.extend(rest.split())
        elif directive == "local":
            locals_.extend(rest.split())
        elif directive == "edge":
            bits = rest.split(None, 2)
            if len(bits) != 3:
                raise ProgramError(f"line {lineno}: edge needs 'src tgt command'")
            edges.append((bits[0], bits[1], bits[2]))
        else:
            raise ProgramError(f"line {lineno}: unknown directive {directive!r}")
    if initial is None:
        raise ProgramError("raw CFG needs an init line")
    if initial not in locations:
        locations.insert(0, initial)
    order = {name: i + 1 for i, name in enumerate(locations)}
    commands, srcs, tgts = [], [], []
    seen: dict[str, int] = {}
    for s, t, cmd_text in edges:
        if s not in order or t not in order:
            raise ProgramError(f"edge endpoints {s!r}/{t!r} must be declared locations")
        cmd = parse_command(cmd_text, globals_, locals_)
        n = seen.get(cmd.name, 0) + 1
        seen[cmd.name] = n
        if n > 1:
            cmd = Command(f"{cmd.name}#{n}", cmd.kind, cmd.assigns, cmd.havoc_var, cmd.havoc_lower, cmd.guard)
        commands.append(cmd)
        srcs.append(order[s])
        tgts.append(order[t])
    return ParameterizedProgram(
        locations=tuple(order.values()),
        commands=tuple(commands),
        initial=order[initial],
        src=tuple(srcs),
        tgt=tuple(tgts),
        globals_=tuple(globals_),
        locals_=tuple(locals_),
    )


def parse_lasso(text: str, program: ParameterizedProgram) -> Lasso:
    """Parse ``cmd@tid ... $ cmd@tid ...`` against a program's commands."""
    if "$" not in text.split():
        raise ValueError("a lasso needs a $ separator")
    stem_text, loop_text = text.split("$", 1)

    def side(chunk: str) -> tuple[IndexedCommand, ...]:
        out = []
        for token in chunk.split():
            if "@" not in token:
                raise ValueError(f"expected cmd@tid, found {token!r}")
            name, tid = token.rsplit("@", 1)
            out.append(IndexedCommand(program.command(name), int(tid)))
        return tuple(out)

    return Lasso(side(stem_text), side(loop_text))
