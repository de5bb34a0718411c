"""Exact rational linear arithmetic: Fourier-Motzkin, sampling, simplex.

All arithmetic uses ``fractions.Fraction`` so there is no tolerance drift
anywhere: projections are exact over the rationals, and integer
feasibility is decided by branch-and-bound on exact relaxation samples
(with an explicit node budget, so the answer may honestly be "unknown").

Constraints are written ``sum(coeffs) + const >= 0`` (or ``= 0``). Keys
are arbitrary hashable objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Sequence

Key = Hashable


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[tuple[Key, Fraction], ...]
    const: Fraction
    eq: bool = False

    @staticmethod
    def make(coeffs: Mapping[Key, Fraction | int], const=0, eq: bool = False) -> "Constraint":
        flat = tuple(
            sorted(
                ((k, Fraction(c)) for k, c in coeffs.items() if c),
                key=lambda it: repr(it[0]),
            )
        )
        return Constraint(flat, Fraction(const), eq)

    @property
    def keys(self) -> frozenset:
        return frozenset(k for k, _ in self.coeffs)

    def coeff(self, key: Key) -> Fraction:
        for k, c in self.coeffs:
            if k == key:
                return c
        return Fraction(0)

    def substitute(self, key: Key, replacement: Mapping[Key, Fraction], rconst: Fraction) -> "Constraint":
        c = self.coeff(key)
        if not c:
            return self
        acc = {k: v for k, v in self.coeffs if k != key}
        for k, v in replacement.items():
            acc[k] = acc.get(k, Fraction(0)) + c * v
        return Constraint.make(acc, self.const + c * rconst, self.eq)

    def evaluate(self, point: Mapping[Key, Fraction]) -> Fraction:
        return self.const + sum(c * point.get(k, Fraction(0)) for k, c in self.coeffs)

    def holds(self, point: Mapping[Key, Fraction]) -> bool:
        value = self.evaluate(point)
        return value == 0 if self.eq else value >= 0

    def scaled_primitive(self) -> "Constraint":
        """Scale to coprime integer coefficients (sign preserved for >=)."""
        if not self.coeffs:
            return self
        denom = math.lcm(*(c.denominator for _, c in self.coeffs), self.const.denominator)
        nums = [abs(int(c * denom)) for _, c in self.coeffs]
        if self.const * denom != 0:
            g = math.gcd(*nums) if nums else 1
        else:
            g = math.gcd(*nums) if nums else 1
        g = g or 1
        scale = Fraction(denom, g)
        return Constraint.make({k: c * scale for k, c in self.coeffs}, self.const * scale, self.eq)


class Unsat(Exception):
    pass


def _split_eq(cons: Iterable[Constraint]) -> list[Constraint]:
    """Replace each equality with a pair of opposite inequalities."""
    out = []
    for c in cons:
        if c.eq:
            out.append(Constraint(c.coeffs, c.const, False))
            out.append(Constraint.make({k: -v for k, v in c.coeffs}, -c.const, False))
        else:
            out.append(c)
    return out


def _prune(cons: list[Constraint]) -> list[Constraint]:
    best: dict[tuple, Constraint] = {}
    for c in cons:
        if not c.coeffs:
            if c.const < 0:
                raise Unsat()
            continue
        p = c.scaled_primitive()
        key = (p.coeffs, p.eq)
        kept = best.get(key)
        # smaller additive constant = stronger >= constraint
        if kept is None or p.const < kept.const:
            best[key] = p
    return list(best.values())


def _fm_step(cons: list[Constraint], key: Key) -> list[Constraint]:
    lowers, uppers, rest = [], [], []
    for c in cons:
        a = c.coeff(key)
        if a == 0:
            rest.append(c)
        elif a > 0:
            lowers.append(c)  # key >= -(rest)/a
        else:
            uppers.append(c)
    for lo in lowers:
        la = lo.coeff(key)
        for up in uppers:
            ua = -up.coeff(key)
            acc: dict[Key, Fraction] = {}
            for k, v in lo.coeffs:
                if k != key:
                    acc[k] = acc.get(k, Fraction(0)) + v * ua
            for k, v in up.coeffs:
                if k != key:
                    acc[k] = acc.get(k, Fraction(0)) + v * la
            rest.append(Constraint.make(acc, lo.const * ua + up.const * la))
    return _prune(rest)


def project(cons: Sequence[Constraint], keep: Iterable[Key]) -> list[Constraint] | None:
    """Rational shadow of the constraint set on ``keep``; None when unsat.

    Equalities on eliminated keys are removed by substitution, which keeps
    the output small; remaining eliminations use Fourier-Motzkin.
    """
    keep = set(keep)
    work = list(cons)
    try:
        # substitution pass for equalities mentioning an eliminable key
        changed = True
        while changed:
            changed = False
            for c in work:
                if not c.eq:
                    continue
                victim = next((k for k in c.keys if k not in keep), None)
                if victim is None:
                    continue
                a = c.coeff(victim)
                repl = {k: -v / a for k, v in c.coeffs if k != victim}
                rconst = -c.const / a
                work = [other.substitute(victim, repl, rconst) for other in work if other is not c]
                changed = True
                break
        eqs = [c for c in work if c.eq]
        work = _prune(_split_eq(work))
        for key in sorted({k for c in work for k in c.keys} - keep, key=repr):
            work = _fm_step(work, key)
        # re-attach equalities over kept keys
        out = list(work)
        for c in eqs:
            if c.keys <= keep:
                p = c.scaled_primitive()
                if not p.coeffs and p.const != 0:
                    raise Unsat()
                if p.coeffs:
                    out.append(p)
        return out
    except Unsat:
        return None


def rational_solve(cons: Sequence[Constraint]) -> dict | None:
    """An exact rational sample point, or None when infeasible.

    Eliminates variables one by one, then back-substitutes choosing
    integer values whenever the feasible interval allows one.
    """
    try:
        work = _prune(_split_eq(cons))
    except Unsat:
        return None
    order = sorted({k for c in work for k in c.keys}, key=repr)
    stages: list[tuple[Key, list[Constraint], list[Constraint]]] = []
    for key in order:
        lowers = [c for c in work if c.coeff(key) > 0]
        uppers = [c for c in work if c.coeff(key) < 0]
        stages.append((key, lowers, uppers))
        try:
            work = _fm_step(work, key)
        except Unsat:
            return None
    for c in work:
        if c.const < 0:
            return None
    point: dict[Key, Fraction] = {}
    for key, lowers, uppers in reversed(stages):
        lo, hi = None, None
        for c in lowers:
            a = c.coeff(key)
            bound = -(c.const + sum(v * point.get(k, Fraction(0)) for k, v in c.coeffs if k != key)) / a
            lo = bound if lo is None else max(lo, bound)
        for c in uppers:
            a = c.coeff(key)
            bound = -(c.const + sum(v * point.get(k, Fraction(0)) for k, v in c.coeffs if k != key)) / a
            hi = bound if hi is None else min(hi, bound)
        point[key] = _pick(lo, hi)
    return point


def _pick(lo: Fraction | None, hi: Fraction | None) -> Fraction:
    if lo is None and hi is None:
        return Fraction(0)
    if lo is None:
        return Fraction(min(0, math.floor(hi)))
    if hi is None:
        return Fraction(max(0, math.ceil(lo)))
    if lo > hi:
        raise Unsat()
    candidate = Fraction(math.ceil(lo))
    if lo <= 0 <= hi:
        return Fraction(0)
    if candidate <= hi:
        return candidate
    return (lo + hi) / 2


def integer_solve(cons: Sequence[Constraint], branch_limit: int = 200) -> tuple[str, dict | None]:
    """("sat", model) / ("unsat", None) / ("unknown", None) over the integers."""
    stack: list[list[Constraint]] = [list(cons)]
    budget = branch_limit
    unknown = False
    while stack and budget > 0:
        budget -= 1
        node = stack.pop()
        point = rational_solve(node)
        if point is None:
            continue
        frac = next((k for k, v in point.items() if v.denominator != 1), None)
        if frac is None:
            return "sat", {k: int(v) for k, v in point.items()}
        value = point[frac]
        below = node + [Constraint.make({frac: -1}, math.floor(value))]
        above = node + [Constraint.make({frac: 1}, -math.ceil(value))]
        stack.append(above)
        stack.append(below)
    if stack or budget <= 0:
        unknown = True
    return ("unknown" if unknown else "unsat"), None


# --- exact simplex ----------------------------------------------------------


def minimize(
    cons: Sequence[Constraint],
    objective: Mapping[Key, Fraction | int],
) -> tuple[str, Fraction | None, dict | None]:
    """Minimize a linear objective over the constraint set.

    Returns ("unsat", None, None), ("unbounded", None, point-ish None) or
    ("ok", optimum, point). Free variables are split into differences of
    nonnegatives; Bland's rule prevents cycling.
    """
    keys = sorted({k for c in cons for k in c.keys} | set(objective), key=repr)
    if not keys:
        bad = any((c.const != 0 if c.eq else c.const < 0) for c in cons)
        return ("unsat", None, None) if bad else ("ok", Fraction(0), {})
    pos = {k: i for i, k in enumerate(keys)}
    ncols = 2 * len(keys)  # x = x+ - x-
    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    for c in cons:
        row = [Fraction(0)] * ncols
        for k, v in c.coeffs:
            row[2 * pos[k]] += v
            row[2 * pos[k] + 1] -= v
        b = -c.const
        if c.eq:
            rows.append(row)
            rhs.append(b)
        else:
            # sum + const >= 0  ->  sum - s = -const, s >= 0
            rows.append(row + [Fraction(-1)])
            rhs.append(b)
            ncols += 1
            for other in rows[:-1]:
                other.append(Fraction(0))
    width = max((len(r) for r in rows), default=ncols)
    for r in rows:
        r.extend([Fraction(0)] * (width - len(r)))
    obj = [Fraction(0)] * width
    for k, v in objective.items():
        obj[2 * pos[k]] += Fraction(v)
        obj[2 * pos[k] + 1] -= Fraction(v)
    status, point = _simplex(rows, rhs, obj)
    if status != "ok":
        return status, None, None
    solution = {k: point[2 * pos[k]] - point[2 * pos[k] + 1] for k in keys}
    value = sum(Fraction(v) * solution[k] for k, v in objective.items())
    return "ok", value, solution


def _simplex(rows: list[list[Fraction]], rhs: list[Fraction], obj: list[Fraction]):
    m = len(rows)
    n = len(obj)
    if m == 0:
        if any(c != 0 for c in obj):
            return "unbounded", None
        return "ok", [Fraction(0)] * n
    # phase 1 tableau with one artificial per row
    tab = []
    for i, row in enumerate(rows):
        r = list(row)
        b = rhs[i]
        if b < 0:
            r = [-v for v in r]
            b = -b
        art = [Fraction(0)] * m
        art[i] = Fraction(1)
        tab.append(r + art + [b])
    basis = [n + i for i in range(m)]
    cost1 = [Fraction(0)] * n + [Fraction(1)] * m + [Fraction(0)]
    _price_out(tab, basis, cost1)
    if not _optimize(tab, basis, cost1, n + m):
        return "unbounded", None  # phase 1 is always bounded; defensive
    if -cost1[-1] != 0:
        return "unsat", None
    # drive artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= n:
            pivot_col = next((j for j in range(n) if tab[i][j] != 0), None)
            if pivot_col is not None:
                _pivot(tab, basis, cost1, i, pivot_col)
    # phase 2
    cost2 = list(obj) + [Fraction(0)] * m + [Fraction(0)]
    _price_out(tab, basis, cost2)
    if not _optimize(tab, basis, cost2, n, forbidden_from=n):
        return "unbounded", None
    point = [Fraction(0)] * n
    for i, b in enumerate(basis):
        if b < n:
            point[b] = tab[i][-1]
    return "ok", point


def _price_out(tab, basis, cost):
    for i, b in enumerate(basis):
        if cost[b] != 0:
            factor = cost[b]
            for j in range(len(cost)):
                cost[j] -= factor * tab[i][j]


def _pivot(tab, basis, cost, row, col):
    piv = tab[row][col]
    tab[row] = [v / piv for v in tab[row]]
    for i in range(len(tab)):
        if i != row and tab[i][col] != 0:
            factor = tab[i][col]
            tab[i] = [a - factor * b for a, b in zip(tab[i], tab[row])]
    if cost[col] != 0:
        factor = cost[col]
        for j in range(len(cost)):
            cost[j] -= factor * tab[row][j]
    basis[row] = col


def _optimize(tab, basis, cost, ncols, forbidden_from=None) -> bool:
    limit = forbidden_from if forbidden_from is not None else ncols
    while True:
        col = next((j for j in range(limit) if cost[j] < 0), None)
        if col is None:
            return True
        best_row, best_ratio = None, None
        for i in range(len(tab)):
            a = tab[i][col]
            if a > 0:
                ratio = tab[i][-1] / a
                if best_ratio is None or ratio < best_ratio or (
                    ratio == best_ratio and basis[i] < basis[best_row]
                ):
                    best_row, best_ratio = i, ratio
        if best_row is None:
            return False
        _pivot(tab, basis, cost, best_row, col)
