"""Linear integer terms, atoms, and conjunctive assertions.

Assertions talk about global variables (``x``), thread-indexed locals
(``d(1)``), and "old" snapshots of either (``old(x)``, ``old(d(1))``).
Everything is normalized at construction time so that syntactic set
operations (subset entailment, canonical naming) are deterministic:
coefficients are integers with gcd 1, inequalities are integer-tightened
(``t > 0`` becomes ``t >= 1``), and variables are kept in a fixed order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Iterable, Mapping, Sequence

__all__ = [
    "Var",
    "Term",
    "Atom",
    "TRUE",
    "FALSE",
    "Assertion",
    "RankingFormula",
    "CanonicalAssertion",
    "true_assertion",
    "assertion",
    "apply_permutation",
    "permute_atom",
    "canonicalize",
    "comb_entails",
    "parse_term",
    "parse_atom",
    "parse_assertion",
]

GLOBAL = "g"
LOCAL = "l"


@dataclass(frozen=True, order=True)
class Var:
    """A scalar program variable reference, possibly an old-state snapshot."""

    old: bool
    kind: str  # GLOBAL or LOCAL
    name: str
    tid: int | None  # thread id for locals; None for globals or unindexed locals

    def __post_init__(self) -> None:
        if self.kind not in (GLOBAL, LOCAL):
            raise ValueError(f"bad variable kind {self.kind!r}")
        if self.kind == GLOBAL and self.tid is not None:
            raise ValueError("global variables carry no thread id")

    @staticmethod
    def g(name: str, old: bool = False) -> "Var":
        return Var(old, GLOBAL, name, None)

    @staticmethod
    def l(name: str, tid: int | None, old: bool = False) -> "Var":
        return Var(old, LOCAL, name, tid)

    @property
    def base(self) -> "Var":
        """The same variable without the old marker."""
        return Var(False, self.kind, self.name, self.tid)

    def with_tid(self, tid: int) -> "Var":
        if self.kind != LOCAL:
            return self
        return Var(self.old, self.kind, self.name, tid)

    def __str__(self) -> str:
        core = self.name if self.kind == GLOBAL else f"{self.name}({self.tid if self.tid is not None else '?'})"
        return f"old({core})" if self.old else core


def _sort_key(var: Var):
    return (var.old, var.kind, var.name, -1 if var.tid is None else var.tid)


@dataclass(frozen=True)
class Term:
    """Linear integer combination of variables plus a constant."""

    coeffs: tuple[tuple[Var, int], ...]
    const: int

    @staticmethod
    def make(coeffs: Mapping[Var, int] | Iterable[tuple[Var, int]] = (), const: int = 0) -> "Term":
        acc: dict[Var, int] = {}
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        for var, c in items:
            if c:
                acc[var] = acc.get(var, 0) + c
        flat = tuple(sorted(((v, c) for v, c in acc.items() if c), key=lambda it: _sort_key(it[0])))
        return Term(flat, const)

    @staticmethod
    def of(var: Var) -> "Term":
        return Term.make({var: 1})

    @staticmethod
    def constant(value: int) -> "Term":
        return Term.make({}, value)

    def __add__(self, other: "Term") -> "Term":
        acc = dict(self.coeffs)
        for v, c in other.coeffs:
            acc[v] = acc.get(v, 0) + c
        return Term.make(acc, self.const + other.const)

    def __sub__(self, other: "Term") -> "Term":
        return self + other.scale(-1)

    def scale(self, k: int) -> "Term":
        return Term.make({v: c * k for v, c in self.coeffs}, self.const * k)

    def shift(self, k: int) -> "Term":
        return Term(self.coeffs, self.const + k)

    @property
    def vars(self) -> frozenset[Var]:
        return frozenset(v for v, _ in self.coeffs)

    def coeff(self, var: Var) -> int:
        for v, c in self.coeffs:
            if v == var:
                return c
        return 0

    def substitute(self, mapping: Mapping[Var, "Term"]) -> "Term":
        out = Term.constant(self.const)
        for v, c in self.coeffs:
            out = out + mapping.get(v, Term.of(v)).scale(c)
        return out

    def map_vars(self, fn) -> "Term":
        return Term.make({fn(v): c for v, c in self.coeffs}, self.const)

    def evaluate(self, valuation) -> int:
        """valuation: callable Var -> int."""
        return self.const + sum(c * valuation(v) for v, c in self.coeffs)

    def to_old(self) -> "Term":
        return self.map_vars(lambda v: Var(True, v.kind, v.name, v.tid))

    def __str__(self) -> str:
        if not self.coeffs:
            return str(self.const)
        parts = []
        for v, c in self.coeffs:
            if not parts:
                prefix = "-" if c < 0 else ""
            else:
                prefix = " - " if c < 0 else " + "
            mag = abs(c)
            parts.append(f"{prefix}{'' if mag == 1 else f'{mag}*'}{v}")
        body = "".join(parts)
        if self.const > 0:
            body += f" + {self.const}"
        elif self.const < 0:
            body += f" - {-self.const}"
        return body


# Relations are normalized to comparisons against zero.
_GE = ">="  # term >= 0
_EQ = "="  # term = 0
_NE = "!="  # term != 0
_TRUE = "true"
_FALSE = "false"


@dataclass(frozen=True)
class Atom:
    """A normalized linear atom: ``term rel 0`` with integer tightening."""

    rel: str
    term: Term

    @staticmethod
    def make(rel: str, term: Term) -> "Atom":
        if rel not in (_GE, _EQ, _NE):
            raise ValueError(f"bad relation {rel!r}")
        coeffs = {v: c for v, c in term.coeffs}
        const = term.const
        if not coeffs:
            if rel == _GE:
                return TRUE if const >= 0 else FALSE
            if rel == _EQ:
                return TRUE if const == 0 else FALSE
            return TRUE if const != 0 else FALSE
        g = 0
        for c in coeffs.values():
            g = gcd(g, abs(c))
        if rel == _GE:
            # a.v + c >= 0  <=>  (a/g).v + floor(c/g) >= 0 over the integers
            term = Term.make({v: c // g for v, c in coeffs.items()}, const // g)
            return Atom(_GE, term)
        if const % g != 0:
            # no integer solution of the equality part
            return FALSE if rel == _EQ else TRUE
        coeffs = {v: c // g for v, c in coeffs.items()}
        const //= g
        lead = min(coeffs.items(), key=lambda it: _sort_key(it[0]))[1]
        if lead < 0:
            coeffs = {v: -c for v, c in coeffs.items()}
            const = -const
        return Atom(rel, Term.make(coeffs, const))

    @staticmethod
    def cmp(left: Term, right: Term, op: str) -> "Atom":
        diff = left - right
        if op in (">=",):
            return Atom.make(_GE, diff)
        if op in ("<=",):
            return Atom.make(_GE, diff.scale(-1))
        if op == ">":
            return Atom.make(_GE, diff.shift(-1))
        if op == "<":
            return Atom.make(_GE, diff.scale(-1).shift(-1))
        if op in ("=", "=="):
            return Atom.make(_EQ, diff)
        if op == "!=":
            return Atom.make(_NE, diff)
        raise ValueError(f"bad comparison operator {op!r}")

    @property
    def vars(self) -> frozenset[Var]:
        return self.term.vars

    @property
    def tids(self) -> frozenset[int]:
        return frozenset(v.tid for v in self.vars if v.tid is not None)

    def negate(self) -> tuple["Atom", ...]:
        """Disjunction of atoms equivalent to the negation over the integers."""
        if self.rel == _TRUE:
            return (FALSE,)
        if self.rel == _FALSE:
            return (TRUE,)
        if self.rel == _GE:
            return (Atom.make(_GE, self.term.scale(-1).shift(-1)),)
        if self.rel == _EQ:
            return (
                Atom.make(_GE, self.term.shift(-1)),
                Atom.make(_GE, self.term.scale(-1).shift(-1)),
            )
        return (Atom.make(_EQ, self.term),)

    def map_vars(self, fn) -> "Atom":
        if self.rel in (_TRUE, _FALSE):
            return self
        return Atom.make(self.rel, self.term.map_vars(fn))

    def evaluate(self, valuation) -> bool:
        if self.rel == _TRUE:
            return True
        if self.rel == _FALSE:
            return False
        value = self.term.evaluate(valuation)
        if self.rel == _GE:
            return value >= 0
        if self.rel == _EQ:
            return value == 0
        return value != 0

    def sort_key(self):
        return (
            self.rel,
            tuple((_sort_key(v), c) for v, c in self.term.coeffs),
            self.term.const,
        )

    def __str__(self) -> str:
        if self.rel == _TRUE:
            return "true"
        if self.rel == _FALSE:
            return "false"
        lhs = Term(self.term.coeffs, 0)
        return f"{lhs} {self.rel} {-self.term.const}"


TRUE = object.__new__(Atom)
object.__setattr__(TRUE, "rel", _TRUE)
object.__setattr__(TRUE, "term", Term((), 0))
FALSE = object.__new__(Atom)
object.__setattr__(FALSE, "rel", _FALSE)
object.__setattr__(FALSE, "term", Term((), -1))


Assertion = frozenset  # frozenset[Atom]; TRUE is the empty set


def assertion(atoms: Iterable[Atom]) -> Assertion:
    out = set()
    for a in atoms:
        if a is TRUE or a.rel == _TRUE:
            continue
        if a is FALSE or a.rel == _FALSE:
            return frozenset({FALSE})
        out.add(a)
    return frozenset(out)


def true_assertion() -> Assertion:
    return frozenset()


def assertion_tids(phi: Assertion) -> frozenset[int]:
    out: set[int] = set()
    for atom in phi:
        out |= atom.tids
    return frozenset(out)


def comb_entails(phi: Assertion, psi: Assertion) -> bool:
    """Combinatorial entailment: psi's conjuncts are a subset of phi's."""
    return psi <= phi


def _check_permutation(pi: Mapping[int, int]) -> None:
    values = list(pi.values())
    if len(set(values)) != len(values):
        raise ValueError(f"mapping {dict(pi)} is not injective")


def permute_atom(atom: Atom, pi: Mapping[int, int]) -> Atom:
    return atom.map_vars(lambda v: v.with_tid(pi.get(v.tid, v.tid)) if v.tid is not None else v)


def apply_permutation(phi: Assertion, pi: Mapping[int, int]) -> Assertion:
    """Rename thread indices of every indexed local; globals are fixed."""
    _check_permutation(pi)
    return assertion(permute_atom(a, pi) for a in phi)


@dataclass(frozen=True)
class CanonicalAssertion:
    """An assertion with thread indices renamed to 1..arity.

    Two assertions that differ only by a permutation of thread ids share
    the same canonical name.
    """

    name: Assertion
    arity: int

    def key(self):
        return tuple(sorted(a.sort_key() for a in self.name))

    def __str__(self) -> str:
        if not self.name:
            return "[true]"
        body = " ; ".join(str(a) for a in sorted(self.name, key=Atom.sort_key))
        return f"[{body}]"


def canonicalize(phi: Assertion) -> tuple[CanonicalAssertion, tuple[int, ...]]:
    """Canonical name plus the witness tuple with ``name[tuple] = phi``.

    The canonical renaming is the injection of the assertion's thread ids
    onto 1..k that minimizes the renamed atom set under a fixed total
    order; ties cannot occur because renamings differ somewhere.
    """
    ids = sorted(assertion_tids(phi))
    k = len(ids)
    if k == 0:
        return CanonicalAssertion(phi, 0), ()
    from itertools import permutations

    best = None
    for image in permutations(range(1, k + 1)):
        pi = dict(zip(ids, image))
        renamed = apply_permutation(phi, pi)
        key = tuple(sorted(a.sort_key() for a in renamed))
        witness = tuple(sorted(pi, key=pi.get))  # position p holds the id sent to p+1
        if best is None or key < best[0] or (key == best[0] and witness < best[2]):
            best = (key, renamed, witness)
    _, renamed, witness = best
    return CanonicalAssertion(renamed, k), witness


@dataclass(frozen=True)
class RankingFormula:
    """Decrease-and-bounded template: old(t) > t  and  old(t) >= bound.

    The template makes the denoted relation on integer states well-founded
    by construction: t strictly decreases and stays at or above the bound.
    """

    term: Term
    bound: int

    def __post_init__(self) -> None:
        if any(v.old for v in self.term.vars):
            raise ValueError("ranking term must not mention old() copies")

    def atoms(self) -> Assertion:
        old_t = self.term.to_old()
        decrease = Atom.make(_GE, (old_t - self.term).shift(-1))
        bounded = Atom.make(_GE, old_t.shift(-self.bound))
        return assertion([decrease, bounded])

    @property
    def tids(self) -> frozenset[int]:
        return frozenset(v.tid for v in self.term.vars if v.tid is not None)

    def permute(self, pi: Mapping[int, int]) -> "RankingFormula":
        _check_permutation(pi)
        return RankingFormula(
            self.term.map_vars(lambda v: v.with_tid(pi.get(v.tid, v.tid)) if v.tid is not None else v),
            self.bound,
        )

    def __str__(self) -> str:
        return f"{self.term} >= {self.bound}"


# --- text syntax ------------------------------------------------------------
#
#   term:  2*x + d(1) - old(x) - 3
#   atom:  d(1) > 0      old(x) = x      x <= 0      x != y
#   assertion: atoms joined with ';'  (empty / 'true' for the empty set)

_TOKEN = re.compile(r"\s*(old|[A-Za-z_][A-Za-z_0-9]*|\d+|<=|>=|==|!=|[-+*()=<>,])")


def _tokenize(text: str) -> list[str]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ValueError(f"cannot tokenize {text[pos:]!r}")
            break
        out.append(m.group(1))
        pos = m.end()
    return out


class _TermParser:
    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            raise ValueError("unexpected end of input")
        if expected is not None and tok != expected:
            raise ValueError(f"expected {expected!r} but found {tok!r}")
        self.pos += 1
        return tok

    def parse_sum(self) -> Term:
        term = self.parse_product(1)
        while self.peek() in ("+", "-"):
            sign = 1 if self.take() == "+" else -1
            term = term + self.parse_product(sign)
        return term

    def parse_product(self, sign: int) -> Term:
        while self.peek() == "-":
            self.take()
            sign = -sign
        tok = self.take()
        if tok.isdigit():
            value = int(tok)
            if self.peek() == "*":
                self.take()
                atom = self.parse_atom_term()
                return atom.scale(sign * value)
            return Term.constant(sign * value)
        self.pos -= 1
        return self.parse_atom_term().scale(sign)

    def parse_atom_term(self) -> Term:
        tok = self.take()
        if tok == "(":
            inner = self.parse_sum()
            self.take(")")
            return inner
        if tok == "old":
            self.take("(")
            inner = self.parse_atom_term()
            self.take(")")
            return inner.to_old()
        if not tok[0].isalpha() and tok[0] != "_":
            raise ValueError(f"expected a variable, found {tok!r}")
        if self.peek() == "(":
            self.take("(")
            idx = self.take()
            if not idx.isdigit():
                raise ValueError(f"thread index must be a positive integer, found {idx!r}")
            self.take(")")
            return Term.of(Var.l(tok, int(idx)))
        return Term.of(Var.g(tok))


def parse_term(text: str) -> Term:
    parser = _TermParser(_tokenize(text))
    term = parser.parse_sum()
    if parser.peek() is not None:
        raise ValueError(f"trailing tokens in term {text!r}")
    return term


_CMP_OPS = ("<=", ">=", "==", "!=", "=", "<", ">")


def parse_atom(text: str) -> Atom:
    stripped = text.strip()
    if stripped == "true":
        return TRUE
    if stripped == "false":
        return FALSE
    tokens = _tokenize(text)
    for pos, tok in enumerate(tokens):
        if tok in _CMP_OPS:
            left = _TermParser(tokens[:pos])
            lterm = left.parse_sum()
            if left.peek() is not None:
                raise ValueError(f"bad left-hand side in {text!r}")
            right = _TermParser(tokens[pos + 1 :])
            rterm = right.parse_sum()
            if right.peek() is not None:
                raise ValueError(f"bad right-hand side in {text!r}")
            return Atom.cmp(lterm, rterm, tok)
    raise ValueError(f"no comparison operator in {text!r}")


def parse_assertion(text: str) -> Assertion:
    stripped = text.strip()
    if not stripped or stripped == "true":
        return true_assertion()
    return assertion(parse_atom(part) for part in stripped.split(";") if part.strip())


def format_assertion(phi: Assertion) -> str:
    if not phi:
        return "true"
    return " ; ".join(str(a) for a in sorted(phi, key=Atom.sort_key))
