"""Quantified predicate automata over words of thread-indexed letters.

A QPA reads a finite word right to left. Its configurations are finite
relational structures: a universe of thread ids plus an interpretation of
every predicate symbol. Transition bodies are positive first-order
formulas, so the models of a transition condition are upward closed and
the minimal ones form a complete frontier; all algorithms here (language
membership, bounded emptiness, certificate checking) work on antichains
of minimal configurations.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

DOLLAR = "$"

# --- positive formulas -------------------------------------------------------


@dataclass(frozen=True)
class Pred:
    name: str
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class Cmp:
    equal: bool
    left: str
    right: str


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class Quant:
    q: str  # "forall" | "exists"
    var: str
    body: "Formula"


@dataclass(frozen=True)
class Lit:
    value: bool


Formula = Pred | Cmp | BoolOp | Quant | Lit

TRUE_F = Lit(True)
FALSE_F = Lit(False)


def fand(parts: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for p in parts:
        if isinstance(p, Lit):
            if not p.value:
                return FALSE_F
            continue
        if isinstance(p, BoolOp) and p.op == "and":
            flat.extend(p.parts)
        else:
            flat.append(p)
    if not flat:
        return TRUE_F
    if len(flat) == 1:
        return flat[0]
    return BoolOp("and", tuple(flat))


def for_(parts: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for p in parts:
        if isinstance(p, Lit):
            if p.value:
                return TRUE_F
            continue
        if isinstance(p, BoolOp) and p.op == "or":
            flat.extend(p.parts)
        else:
            flat.append(p)
    if not flat:
        return FALSE_F
    if len(flat) == 1:
        return flat[0]
    return BoolOp("or", tuple(flat))


def eq(a: str, b: str) -> Formula:
    return Cmp(True, a, b)


def neq(a: str, b: str) -> Formula:
    return Cmp(False, a, b)


def free_vars(f: Formula) -> frozenset[str]:
    if isinstance(f, Pred):
        return frozenset(f.args)
    if isinstance(f, Cmp):
        return frozenset((f.left, f.right))
    if isinstance(f, BoolOp):
        out: frozenset[str] = frozenset()
        for p in f.parts:
            out |= free_vars(p)
        return out
    if isinstance(f, Quant):
        return free_vars(f.body) - {f.var}
    return frozenset()


def all_vars(f: Formula) -> frozenset[str]:
    if isinstance(f, Quant):
        return all_vars(f.body) | {f.var}
    if isinstance(f, BoolOp):
        out: frozenset[str] = frozenset()
        for p in f.parts:
            out |= all_vars(p)
        return out
    return free_vars(f)


def quantifier_rank(f: Formula) -> int:
    if isinstance(f, Quant):
        return 1 + quantifier_rank(f.body)
    if isinstance(f, BoolOp):
        return max((quantifier_rank(p) for p in f.parts), default=0)
    return 0


def rename_vars(f: Formula, mapping: Mapping[str, str]) -> Formula:
    if isinstance(f, Pred):
        return Pred(f.name, tuple(mapping.get(a, a) for a in f.args))
    if isinstance(f, Cmp):
        return Cmp(f.equal, mapping.get(f.left, f.left), mapping.get(f.right, f.right))
    if isinstance(f, BoolOp):
        return BoolOp(f.op, tuple(rename_vars(p, mapping) for p in f.parts))
    if isinstance(f, Quant):
        inner = {k: v for k, v in mapping.items() if k != f.var}
        return Quant(f.q, f.var, rename_vars(f.body, inner))
    return f


def demorganize(f: Formula, rename: Callable[[str], str]) -> Formula:
    """Dual formula over a negated copy of the vocabulary."""
    if isinstance(f, Pred):
        return Pred(rename(f.name), f.args)
    if isinstance(f, Cmp):
        return Cmp(not f.equal, f.left, f.right)
    if isinstance(f, BoolOp):
        dual = "or" if f.op == "and" else "and"
        return BoolOp(dual, tuple(demorganize(p, rename) for p in f.parts))
    if isinstance(f, Quant):
        dual = "exists" if f.q == "forall" else "forall"
        return Quant(dual, f.var, demorganize(f.body, rename))
    return Lit(not f.value)


def format_formula(f: Formula) -> str:
    if isinstance(f, Lit):
        return "true" if f.value else "false"
    if isinstance(f, Pred):
        return f.name if not f.args else f"{f.name}({', '.join(f.args)})"
    if isinstance(f, Cmp):
        return f"{f.left} {'=' if f.equal else '!='} {f.right}"
    if isinstance(f, BoolOp):
        sep = " & " if f.op == "and" else " | "
        return "(" + sep.join(format_formula(p) for p in f.parts) + ")"
    return f"({f.q} {f.var}. {format_formula(f.body)})"


# --- automaton ---------------------------------------------------------------

Fact = tuple[str, tuple[int, ...]]
ConfigKey = frozenset  # frozenset[Fact]


@dataclass(frozen=True)
class Configuration:
    universe: frozenset[int]
    facts: frozenset[Fact]


@dataclass
class Qpa:
    arity: dict[str, int]
    alphabet: tuple[str, ...]
    delta: dict[tuple[str, str], Formula]
    start: Formula
    accepting: frozenset[str]

    def __post_init__(self) -> None:
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("duplicate letters in alphabet")
        if free_vars(self.start):
            raise ValueError("start formula must be closed")
        for q in self.arity:
            for letter in self.alphabet:
                body = self.delta.get((q, letter))
                if body is None:
                    raise ValueError(f"missing transition for ({q!r}, {letter!r})")
                allowed = {"i0"} | {f"i{j}" for j in range(1, self.arity[q] + 1)}
                extra = free_vars(body) - allowed
                if extra:
                    raise ValueError(f"transition ({q!r}, {letter!r}) has stray variables {sorted(extra)}")
        if not self.accepting <= set(self.arity):
            raise ValueError("accepting predicates must be declared")

    @property
    def predicates(self) -> tuple[str, ...]:
        return tuple(self.arity)


def eval_qpa_formula(config: Configuration, env: Mapping[str, int], f: Formula) -> bool:
    return _eval(config.facts, tuple(sorted(config.universe)), dict(env), f)


def _eval(facts: ConfigKey, universe: tuple[int, ...], env: dict[str, int], f: Formula) -> bool:
    if isinstance(f, Lit):
        return f.value
    if isinstance(f, Pred):
        try:
            ground = (f.name, tuple(env[a] for a in f.args))
        except KeyError as err:
            raise ValueError(f"unbound variable {err.args[0]!r}") from None
        return ground in facts
    if isinstance(f, Cmp):
        try:
            same = env[f.left] == env[f.right]
        except KeyError as err:
            raise ValueError(f"unbound variable {err.args[0]!r}") from None
        return same if f.equal else not same
    if isinstance(f, BoolOp):
        if f.op == "and":
            return all(_eval(facts, universe, env, p) for p in f.parts)
        return any(_eval(facts, universe, env, p) for p in f.parts)
    if f.q == "forall":
        return all(_eval(facts, universe, {**env, f.var: u}, f.body) for u in universe)
    return any(_eval(facts, universe, {**env, f.var: u}, f.body) for u in universe)


# --- minimal-model machinery --------------------------------------------------


def _antichain_add(chain: list[frozenset], item: frozenset) -> None:
    for kept in chain:
        if kept <= item:
            return
    chain[:] = [kept for kept in chain if not item < kept]
    chain.append(item)


def _antichain(items: Iterable[frozenset]) -> tuple[frozenset, ...]:
    chain: list[frozenset] = []
    for item in items:
        _antichain_add(chain, item)
    return tuple(sorted(chain, key=lambda s: (len(s), sorted(s))))


def _dnf(f: Formula, env: dict[str, int], universe: tuple[int, ...]) -> tuple[frozenset, ...]:
    """Irredundant DNF of a positive formula as an antichain of fact sets."""
    if isinstance(f, Lit):
        return (frozenset(),) if f.value else ()
    if isinstance(f, Pred):
        return (frozenset({(f.name, tuple(env[a] for a in f.args))}),)
    if isinstance(f, Cmp):
        same = env[f.left] == env[f.right]
        return (frozenset(),) if (same if f.equal else not same) else ()
    if isinstance(f, BoolOp):
        if f.op == "or":
            return _antichain(d for p in f.parts for d in _dnf(p, env, universe))
        acc: tuple[frozenset, ...] = (frozenset(),)
        for p in f.parts:
            branch = _dnf(p, env, universe)
            if not branch:
                return ()
            acc = _antichain(a | b for a in acc for b in branch)
        return acc
    if f.q == "exists":
        return _antichain(d for u in universe for d in _dnf(f.body, {**env, f.var: u}, universe))
    acc = (frozenset(),)
    for u in universe:
        branch = _dnf(f.body, {**env, f.var: u}, universe)
        if not branch:
            return ()
        acc = _antichain(a | b for a in acc for b in branch)
    return acc


class Walker:
    """Memoized minimal-model frontier transitions for one (QPA, universe).

    A frontier is an antichain of minimal configurations over the fixed
    universe; stepping a frontier on an indexed letter is deterministic,
    so word membership reduces to walks in a lazily built transition
    graph over frontiers.
    """

    def __init__(self, qpa: Qpa, universe: Iterable[int]):
        self.qpa = qpa
        self.universe = tuple(sorted(set(universe)))
        if any(u < 1 for u in self.universe):
            raise ValueError("thread ids must be positive")
        self._body_cache: dict[tuple, tuple[frozenset, ...]] = {}
        self._config_cache: dict[tuple, tuple[frozenset, ...]] = {}
        self._step_cache: dict[tuple, tuple[frozenset, ...]] = {}
        self._start: tuple[frozenset, ...] | None = None

    # frontiers are canonical tuples of frozensets (sorted by _antichain)

    def start_frontier(self) -> tuple[frozenset, ...]:
        if self._start is None:
            self._start = _dnf(self.qpa.start, {}, self.universe)
        return self._start

    def _body_dnf(self, fact: Fact, letter: str, k: int) -> tuple[frozenset, ...]:
        key = (fact, letter, k)
        cached = self._body_cache.get(key)
        if cached is None:
            pred, args = fact
            body = self.qpa.delta[(pred, letter)]
            env = {"i0": k}
            for j, value in enumerate(args, start=1):
                env[f"i{j}"] = value
            cached = _dnf(body, env, self.universe)
            self._body_cache[key] = cached
        return cached

    def config_step(self, config: frozenset, letter: str, k: int) -> tuple[frozenset, ...]:
        key = (config, letter, k)
        cached = self._config_cache.get(key)
        if cached is None:
            acc: tuple[frozenset, ...] = (frozenset(),)
            for fact in sorted(config):
                branch = self._body_dnf(fact, letter, k)
                if not branch:
                    acc = ()
                    break
                acc = _antichain(a | b for a in acc for b in branch)
            cached = acc
            self._config_cache[key] = cached
        return cached

    def step(self, frontier: tuple[frozenset, ...], letter: str, k: int) -> tuple[frozenset, ...]:
        key = (frontier, letter, k)
        cached = self._step_cache.get(key)
        if cached is None:
            cached = _antichain(nxt for config in frontier for nxt in self.config_step(config, letter, k))
            self._step_cache[key] = cached
        return cached

    def accepting(self, frontier: tuple[frozenset, ...]) -> bool:
        acc = self.qpa.accepting
        return any(all(fact[0] in acc for fact in config) for config in frontier)

    def cache_size(self) -> int:
        return len(self._body_cache) + len(self._config_cache) + len(self._step_cache)


def min_successors(qpa: Qpa, config: Configuration, letter: str, k: int) -> frozenset[Configuration]:
    """Subset-minimal successor configurations on reading (letter : k)."""
    if k not in config.universe:
        raise ValueError(f"executing thread {k} is outside the universe")
    walker = Walker(qpa, config.universe)
    return frozenset(Configuration(config.universe, facts) for facts in walker.config_step(config.facts, letter, k))


Word = Sequence[tuple[str, int | None]]


def accepts(
    qpa: Qpa,
    word: Word,
    universe: Iterable[int] | None = None,
    extra_ids: int = 1,
) -> bool:
    """Word membership; the word is read right to left.

    With no explicit universe the check sweeps universes consisting of the
    word's thread ids plus 0..extra_ids fresh ids (start formulas with
    existentials may need witnesses that do not occur in the word).
    """
    ids = sorted({tid for _, tid in word if tid is not None})
    if any(tid < 1 for tid in ids):
        raise ValueError("thread ids must be positive")
    for letter, _ in word:
        if letter not in qpa.alphabet:
            raise ValueError(f"letter {letter!r} is not in the alphabet")
    if universe is not None:
        universes = [tuple(sorted(set(universe)))]
        if ids and not set(ids) <= set(universes[0]):
            raise ValueError("universe must contain the word's thread ids")
    else:
        base = ids or []
        top = max(base, default=0)
        universes = []
        for j in range(extra_ids + 1):
            candidate = tuple(base + [top + m for m in range(1, j + 1)])
            if candidate:
                universes.append(candidate)
        if not universes:
            universes = [(1,)]
    for uni in universes:
        walker = Walker(qpa, uni)
        frontier = walker.start_frontier()
        ok = True
        for letter, tid in reversed(list(word)):
            k = tid if tid is not None else uni[0]
            frontier = walker.step(frontier, letter, k)
            if not frontier:
                ok = False
                break
        if ok and walker.accepting(frontier):
            return True
    return False


# --- Boolean operations -------------------------------------------------------


def _prefixed(qpa: Qpa, prefix: str) -> Qpa:
    rename = lambda name: prefix + name
    arity = {rename(q): ar for q, ar in qpa.arity.items()}
    delta = {
        (rename(q), letter): rename_preds(body, rename)
        for (q, letter), body in qpa.delta.items()
    }
    return Qpa(arity, qpa.alphabet, delta, rename_preds(qpa.start, rename), frozenset(rename(q) for q in qpa.accepting))


def rename_preds(f: Formula, rename: Callable[[str], str]) -> Formula:
    if isinstance(f, Pred):
        return Pred(rename(f.name), f.args)
    if isinstance(f, BoolOp):
        return BoolOp(f.op, tuple(rename_preds(p, rename) for p in f.parts))
    if isinstance(f, Quant):
        return Quant(f.q, f.var, rename_preds(f.body, rename))
    return f


def _binary(op: str, a: Qpa, b: Qpa) -> Qpa:
    if a.alphabet != b.alphabet:
        raise ValueError("boolean operations need identical alphabets")
    left = _prefixed(a, "L.")
    right = _prefixed(b, "R.")
    arity = {**left.arity, **right.arity}
    delta = {**left.delta, **right.delta}
    combine = fand if op == "and" else for_
    return Qpa(arity, a.alphabet, delta, combine([left.start, right.start]), left.accepting | right.accepting)


def intersect(a: Qpa, b: Qpa) -> Qpa:
    return _binary("and", a, b)


def union(a: Qpa, b: Qpa) -> Qpa:
    return _binary("or", a, b)


def complement(a: Qpa) -> Qpa:
    rename = lambda name: "~" + name
    arity = {rename(q): ar for q, ar in a.arity.items()}
    delta = {
        (rename(q), letter): demorganize(body, rename)
        for (q, letter), body in a.delta.items()
    }
    accepting = frozenset(rename(q) for q in a.arity if q not in a.accepting)
    return Qpa(arity, a.alphabet, delta, demorganize(a.start, rename), accepting)


def compose_boolean(op: str, a: Qpa, b: Qpa | None = None) -> Qpa:
    if op in ("intersection", "and", "&"):
        assert b is not None
        return intersect(a, b)
    if op in ("union", "or", "|"):
        assert b is not None
        return union(a, b)
    if op in ("complement", "not", "~"):
        return complement(a)
    raise ValueError(f"unknown boolean operation {op!r}")


# --- symbolic post and emptiness certificates ----------------------------------


def symbolic_post(qpa: Qpa, phi: Formula, letter: str) -> Formula:
    """Propagate phi across one letter, existentially quantifying the reader."""
    used = set(all_vars(phi))
    counter = 0

    def fresh(base: str) -> str:
        nonlocal counter
        while True:
            name = f"{base}#{counter}"
            counter += 1
            if name not in used:
                used.add(name)
                return name

    reader = fresh("i")

    def subst(f: Formula) -> Formula:
        if isinstance(f, Pred):
            body = qpa.delta[(f.name, letter)]
            mapping = {"i0": reader}
            for j, arg in enumerate(f.args, start=1):
                mapping[f"i{j}"] = arg
            return _capture_free(body, mapping, fresh)
        if isinstance(f, BoolOp):
            return BoolOp(f.op, tuple(subst(p) for p in f.parts))
        if isinstance(f, Quant):
            return Quant(f.q, f.var, subst(f.body))
        return f

    return Quant("exists", reader, subst(phi))


def _capture_free(f: Formula, mapping: dict[str, str], fresh) -> Formula:
    if isinstance(f, Quant):
        renamed = fresh(f.var.split("#")[0])
        inner = {**mapping, f.var: renamed}
        return Quant(f.q, renamed, _capture_free(f.body, inner, fresh))
    if isinstance(f, BoolOp):
        return BoolOp(f.op, tuple(_capture_free(p, mapping, fresh) for p in f.parts))
    return rename_vars(f, mapping)


@dataclass(frozen=True)
class CertAccepted:
    pass


@dataclass(frozen=True)
class CertBoundedOnly:
    checked_universe: int


@dataclass(frozen=True)
class CertRejected:
    condition: str  # "Initialization" | "Consecution" | "Rejection"
    letter: str | None
    witness: Configuration


CertificateVerdict = CertAccepted | CertBoundedOnly | CertRejected


def rejection_formula(qpa: Qpa) -> Formula:
    parts = []
    for q, ar in qpa.arity.items():
        if q in qpa.accepting:
            continue
        body: Formula = Pred(q, tuple(f"i{j}" for j in range(1, ar + 1)))
        for j in range(ar, 0, -1):
            body = Quant("exists", f"i{j}", body)
        parts.append(body)
    return for_(parts)


def _counter_model(qpa: Qpa, lhs: Formula, rhs: Formula, max_universe: int, atom_cap: int) -> tuple[Configuration | None, bool]:
    """Search for a structure with lhs true and rhs false.

    Returns (witness or None, exhausted?) where exhausted means every
    structure up to max_universe was enumerated.
    """
    from itertools import combinations, product

    exhausted = True
    for n in range(0, max_universe + 1):
        universe = tuple(range(1, n + 1))
        atoms: list[Fact] = []
        for q, ar in qpa.arity.items():
            for args in product(universe, repeat=ar):
                atoms.append((q, args))
        if len(atoms) > atom_cap:
            exhausted = False
            continue
        for r in range(0, len(atoms) + 1):
            for chosen in combinations(atoms, r):
                facts = frozenset(chosen)
                if _eval(facts, universe, {}, lhs) and not _eval(facts, universe, {}, rhs):
                    return Configuration(frozenset(universe), facts), exhausted
    return None, exhausted


def _monadic_small_model_bound(qpa: Qpa, pairs) -> int | None:
    if any(ar > 1 for ar in qpa.arity.values()):
        return None
    unary = sum(1 for ar in qpa.arity.values() if ar == 1)
    rank = max((max(quantifier_rank(l), quantifier_rank(r)) for _, _, l, r in pairs), default=0)
    return max(1, rank) * (2**unary)


def check_emptiness_certificate(
    qpa: Qpa,
    cert: Formula,
    entailment_oracle: Callable[[Formula, Formula], bool] | None = None,
    max_universe: int = 3,
    atom_cap: int = 18,
) -> CertificateVerdict:
    """Check Initialization / Consecution / Rejection for a candidate invariant.

    The built-in oracle enumerates all structures with universe size up to
    ``max_universe``; a counter-model refutes the certificate. Without a
    counter-model the verdict is Accepted only when the check was actually
    complete: either an external entailment oracle certified all three
    conditions, or the vocabulary is monadic and the enumerated sizes reach
    the small-model bound. Anything else is BoundedOnly.
    """
    if free_vars(cert):
        raise ValueError("certificate must be a closed formula")
    pairs: list[tuple[str, str | None, Formula, Formula]] = [("Initialization", None, qpa.start, cert)]
    for letter in qpa.alphabet:
        pairs.append(("Consecution", letter, symbolic_post(qpa, cert, letter), cert))
    pairs.append(("Rejection", None, cert, rejection_formula(qpa)))

    complete = True
    for condition, letter, lhs, rhs in pairs:
        witness, exhausted = _counter_model(qpa, lhs, rhs, max_universe, atom_cap)
        if witness is not None:
            return CertRejected(condition, letter, witness)
        complete = complete and exhausted
    if entailment_oracle is not None:
        try:
            if all(entailment_oracle(lhs, rhs) for _, _, lhs, rhs in pairs):
                return CertAccepted()
            return CertBoundedOnly(max_universe)
        except Exception:
            return CertBoundedOnly(max_universe)
    bound = _monadic_small_model_bound(qpa, pairs)
    if complete and bound is not None and bound <= max_universe:
        return CertAccepted()
    return CertBoundedOnly(max_universe)


# --- bounded emptiness ----------------------------------------------------------


@dataclass(frozen=True)
class EmptyUpTo:
    n_max: int
    len_max: int


@dataclass(frozen=True)
class Counterexample:
    word: tuple[tuple[str, int | None], ...]
    universe_size: int


@dataclass(frozen=True)
class SearchLimit:
    detail: str


EmptinessResult = EmptyUpTo | Counterexample | SearchLimit


def _indexed_letters(qpa: Qpa, n: int) -> list[tuple[str, int | None]]:
    out: list[tuple[str, int | None]] = []
    for letter in qpa.alphabet:
        if letter == DOLLAR:
            out.append((DOLLAR, None))
        else:
            out.extend((letter, k) for k in range(1, n + 1))
    return out


def _word_key(qpa: Qpa, word: Sequence[tuple[str, int | None]]):
    index = {letter: i for i, letter in enumerate(qpa.alphabet)}
    return tuple((index[letter], 0 if tid is None else tid) for letter, tid in word)


def bounded_emptiness(
    qpa: Qpa,
    n_max: int,
    len_max: int,
    state_cap: int = 200_000,
) -> EmptinessResult:
    """Search for an accepted word with at most len_max letters over
    universes {1..n}, n <= n_max.

    Returns the first counterexample ordered by (length, word, universe
    size), where words compare letter-by-letter in alphabet order with
    thread ids as tie breakers; EmptyUpTo if none exists at the bounds.
    """
    if n_max < 1 or len_max < 1:
        raise ValueError("bounds must be at least 1")
    candidates: list[tuple[int, tuple, int, tuple]] = []  # (length, word_key, n, word)
    best_len: int | None = None
    for n in range(1, n_max + 1):
        walker = Walker(qpa, range(1, n + 1))
        letters = _indexed_letters(qpa, n)
        start = walker.start_frontier()
        if not start:
            continue
        if walker.accepting(start):
            candidates.append((0, (), n, ()))
            best_len = 0
            continue
        layers: list[list[tuple[frozenset, ...]]] = [[start]]
        found_len: int | None = None
        states_seen = 1
        horizon = len_max if best_len is None else min(len_max, best_len)
        for length in range(1, horizon + 1):
            nxt: dict[tuple, None] = {}
            hit = False
            for frontier in layers[-1]:
                for letter, tid in letters:
                    k = tid if tid is not None else 1
                    stepped = walker.step(frontier, letter, k)
                    if not stepped:
                        continue
                    if stepped not in nxt:
                        nxt[stepped] = None
                        states_seen += 1
                        if states_seen > state_cap:
                            return SearchLimit(f"frontier-state budget exceeded at universe {n}")
                    if walker.accepting(stepped):
                        hit = True
            layers.append(list(nxt))
            if hit:
                found_len = length
                break
        if found_len is None:
            continue
        word = _extract_word(walker, letters, layers, found_len)
        candidates.append((found_len, _word_key(qpa, word), n, word))
        best_len = found_len if best_len is None else min(best_len, found_len)
    if not candidates:
        return EmptyUpTo(n_max, len_max)
    length, _, n, word = min(candidates, key=lambda c: (c[0], c[1], c[2]))
    return Counterexample(tuple(word), n)


def _extract_word(walker: Walker, letters, layers, length: int) -> tuple[tuple[str, int | None], ...]:
    """Lexicographically least accepted word of the given length.

    The word is built left to right; because the automaton reads right to
    left, position p of the word labels the transition from layer
    length-p to layer length-p+1, so the choice runs backwards through
    the layered reachability sets.
    """
    targets = [f for f in layers[length] if walker.accepting(f)]
    word: list[tuple[str, int | None]] = []
    target_set = set(targets)
    for p in range(1, length + 1):
        sources = layers[length - p]
        for letter, tid in letters:
            k = tid if tid is not None else 1
            srcs = [f for f in sources if walker.step(f, letter, k) in target_set]
            if srcs:
                word.append((letter, tid))
                target_set = set(srcs)
                break
        else:  # pragma: no cover - layered sets guarantee an edge exists
            raise AssertionError("no predecessor found while reconstructing a word")
    return tuple(word)


# --- interchange format ----------------------------------------------------------
#
#   pred <name>/<arity> [accepting]
#   start <formula>
#   delta <name>(<vars>) <letter>[:<var>] := <formula>
#
# Formulas use &, |, forall v. , exists v. , =, !=, true, false. Predicate
# names that contain operator characters must be wrapped in [brackets].

_DELTA_RE = re.compile(r"delta\s+(\S+?)\((.*?)\)\s+(\S+)\s*:=\s*(.*)$")


def _tokenize_formula(text: str) -> list[str]:
    tokens: list[str] = []
    pos = 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch.isspace():
            pos += 1
            continue
        if text.startswith("!=", pos):
            tokens.append("!=")
            pos += 2
            continue
        if ch in "()&|=.,":
            tokens.append(ch)
            pos += 1
            continue
        # identifier, possibly containing [..] groups (canonical atom names)
        start = pos
        while pos < n:
            c = text[pos]
            if c == "[":
                depth = 0
                while pos < n:
                    if text[pos] == "[":
                        depth += 1
                    elif text[pos] == "]":
                        depth -= 1
                        if depth == 0:
                            pos += 1
                            break
                    pos += 1
                continue
            if c.isspace() or c in "()&|=.," or text.startswith("!=", pos):
                break
            pos += 1
        tokens.append(text[start:pos])
    return tokens


class _FormulaParser:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected=None):
        tok = self.peek()
        if tok is None:
            raise ValueError("unexpected end of formula")
        if expected is not None and tok != expected:
            raise ValueError(f"expected {expected!r}, found {tok!r}")
        self.pos += 1
        return tok

    def parse(self) -> Formula:
        f = self.parse_or()
        if self.peek() is not None:
            raise ValueError(f"trailing tokens {self.tokens[self.pos:]!r}")
        return f

    def parse_or(self) -> Formula:
        parts = [self.parse_and()]
        while self.peek() == "|":
            self.take()
            parts.append(self.parse_and())
        return for_(parts)

    def parse_and(self) -> Formula:
        parts = [self.parse_unary()]
        while self.peek() == "&":
            self.take()
            parts.append(self.parse_unary())
        return fand(parts)

    def parse_unary(self) -> Formula:
        tok = self.peek()
        if tok == "(":
            self.take()
            inner = self.parse_or()
            self.take(")")
            return inner
        if tok in ("forall", "exists"):
            self.take()
            var = self.take()
            self.take(".")
            return Quant(tok, var, self.parse_or())
        if tok == "true":
            self.take()
            return TRUE_F
        if tok == "false":
            self.take()
            return FALSE_F
        name = self.take()
        if self.peek() == "(":
            self.take()
            args = []
            while self.peek() != ")":
                args.append(self.take())
                if self.peek() == ",":
                    self.take()
            self.take(")")
            return Pred(name, tuple(args))
        if self.peek() in ("=", "!="):
            op = self.take()
            other = self.take()
            return Cmp(op == "=", name, other)
        return Pred(name, ())


def parse_formula(text: str) -> Formula:
    return _FormulaParser(_tokenize_formula(text)).parse()


def parse_qpa(text: str) -> Qpa:
    arity: dict[str, int] = {}
    accepting: set[str] = set()
    start: Formula | None = None
    raw_delta: list[tuple[str, str, str, str]] = []
    letters: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if line.startswith("alphabet "):
                for letter in line[9:].split():
                    if letter not in letters:
                        letters.append(letter)
            elif line.startswith("pred "):
                rest = line[5:].split()
                name, ar = rest[0].rsplit("/", 1)
                arity[name] = int(ar)
                if len(rest) > 1 and rest[1] == "accepting":
                    accepting.add(name)
            elif line.startswith("start "):
                start = parse_formula(line[6:])
            elif line.startswith("delta "):
                m = _DELTA_RE.match(line)
                if not m:
                    raise ValueError("malformed delta line")
                name, argtext, letter, body = m.groups()
                if ":" in letter:
                    letter, reader = letter.rsplit(":", 1)
                else:
                    reader = "i0"
                args = [a.strip() for a in argtext.split(",") if a.strip()]
                if letter not in letters:
                    letters.append(letter)
                raw_delta.append((name, letter, body, ",".join([reader] + args)))
            else:
                raise ValueError(f"unrecognized directive {line.split()[0]!r}")
        except ValueError as err:
            raise ValueError(f"line {lineno}: {err}") from None
    if start is None:
        raise ValueError("missing start formula")
    delta: dict[tuple[str, str], Formula] = {}
    for name, letter, body, varspec in raw_delta:
        names = varspec.split(",")
        mapping = {names[0]: "i0"}
        for j, v in enumerate(names[1:], start=1):
            mapping[v] = f"i{j}"
        delta[(name, letter)] = rename_vars(parse_formula(body), mapping)
    for q in arity:
        for letter in letters:
            delta.setdefault((q, letter), FALSE_F)
    return Qpa(arity, tuple(letters), delta, start, frozenset(accepting))


def format_qpa(qpa: Qpa) -> str:
    lines = [f"alphabet {' '.join(qpa.alphabet)}"]
    for q, ar in qpa.arity.items():
        suffix = " accepting" if q in qpa.accepting else ""
        lines.append(f"pred {q}/{ar}{suffix}")
    lines.append(f"start {format_formula(qpa.start)}")
    for (q, letter), body in sorted(qpa.delta.items()):
        args = ",".join(f"i{j}" for j in range(1, qpa.arity[q] + 1))
        lines.append(f"delta {q}({args}) {letter}:i0 := {format_formula(body)}")
    return "\n".join(lines) + "\n"
