"""Potential, per-pair drop, phase predicates and the incremental phase detector.

Everything involving the average is kept exact. The potential is stored as
``n**2 * phi``, which is always an integer since ``n * l_i - m`` is.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .core import (
    ROUND_HALF_AWAY,
    BalanceFn,
    InvalidConfiguration,
    StepRecord,
    balance_pair,
    round_average,
)

DEFAULT_C = 10
ENUMERATION_LIMIT = 64


@dataclass(frozen=True)
class DropValue:
    delta: Fraction
    parity: int


@dataclass(frozen=True)
class PhaseTimes:
    t1: int | None = None
    t2: int | None = None
    t3: int | None = None

    def as_dict(self) -> dict[str, int | None]:
        return {"t1": self.t1, "t2": self.t2, "t3": self.t3}


def potential_n2(loads: Sequence[int]) -> int:
    """Return ``n**2 * phi`` as an exact integer."""
    n, m = len(loads), sum(loads)
    return sum((n * x - m) ** 2 for x in loads)


def potential(loads: Sequence[int]) -> Fraction:
    n = len(loads)
    return Fraction(potential_n2(loads), n * n)


def potential_drop(loads: Sequence[int], i: int, j: int) -> DropValue:
    if i == j:
        raise InvalidConfiguration("pair: i and j must differ")
    d = loads[i] - loads[j]
    r = (loads[i] + loads[j]) & 1
    return DropValue(Fraction(d * d - r * r, 2), r)


def _pair_change_n2(n: int, m: int, a: int, b: int, na: int, nb: int) -> int:
    """``n**2 * (phi_before - phi_after)`` when loads a, b become na, nb.

    Only valid when the pair conserves its sum; otherwise the average moves and
    the whole vector has to be re-evaluated.
    """
    return (n * a - m) ** 2 + (n * b - m) ** 2 - (n * na - m) ** 2 - (n * nb - m) ** 2


def drop_matches_potential(
    loads: Sequence[int], i: int, j: int, balance: BalanceFn = balance_pair
) -> bool:
    """Check the closed-form drop against a direct before/after evaluation."""
    n, m = len(loads), sum(loads)
    a, b = loads[i], loads[j]
    na, nb = balance(a, b)
    if na + nb == a + b:
        measured = _pair_change_n2(n, m, a, b, na, nb)
    else:
        after = list(loads)
        after[i], after[j] = na, nb
        measured = potential_n2(loads) - potential_n2(after)
    return potential_drop(loads, i, j).delta * n * n == measured


def pairwise_square_sum(loads: Sequence[int]) -> int:
    total = 0
    for i, x in enumerate(loads):
        for y in loads[i + 1:]:
            total += (x - y) ** 2
    return total


def pairwise_square_sum_identity_check(loads: Sequence[int]) -> bool:
    # n * phi == potential_n2 / n, so compare n * lhs against the scaled potential.
    return len(loads) * pairwise_square_sum(loads) == potential_n2(loads)


def exact_expected_potential_after_step(
    loads: Sequence[int], balance: BalanceFn = balance_pair
) -> Fraction:
    """Expected potential after one step, by enumerating all ordered pairs."""
    n = len(loads)
    if n > ENUMERATION_LIMIT:
        raise InvalidConfiguration(f"n: exact enumeration is limited to n <= {ENUMERATION_LIMIT}")
    if n < 2:
        raise InvalidConfiguration("n: need at least 2 nodes")
    m = sum(loads)
    before = potential_n2(loads)
    total = 0
    after = list(loads)
    for u in range(n):
        a = loads[u]
        for v in range(n):
            if u == v:
                continue
            b = loads[v]
            na, nb = balance(a, b)
            if na + nb == a + b:
                total += before - _pair_change_n2(n, m, a, b, na, nb)
            else:
                # sum not conserved: re-evaluate around the new average
                after[u], after[v] = na, nb
                total += potential_n2(after)
                after[u], after[v] = a, b
    return Fraction(total, n * (n - 1) * n * n)


def expected_drop_bound(loads: Sequence[int]) -> Fraction:
    n = len(loads)
    return (1 - Fraction(1, n)) * potential(loads) + Fraction(1, 2)


def gamma_fraction(loads: Sequence[int], rounding: str = ROUND_HALF_AWAY) -> Fraction:
    n = len(loads)
    r = round_average(sum(loads), n, rounding)
    return Fraction(sum(1 for x in loads if x <= r), n)


def overloaded_set(loads: Sequence[int], c: int = DEFAULT_C) -> set[int]:
    """Nodes whose load is at least the average plus ``c``."""
    n, m = len(loads), sum(loads)
    return {i for i, x in enumerate(loads) if n * x >= m + c * n}


def phase1_holds(loads: Sequence[int]) -> bool:
    n = len(loads)
    return potential_n2(loads) < n ** 3


def phase2_holds(loads: Sequence[int], c: int = DEFAULT_C) -> bool:
    n, m = len(loads), sum(loads)
    return n * max(loads) <= m + 2 * c * n and n * min(loads) >= m - 2 * c * n


def almost_balanced(loads: Sequence[int], rounding: str = ROUND_HALF_AWAY) -> bool:
    r = round_average(sum(loads), len(loads), rounding)
    return max(loads) <= r + 1 and min(loads) >= r - 1


class PhaseDetector:
    """Tracks potential, max and min incrementally and records first-hit times.

    ``t2`` is the first time at or after ``t1`` where every load is within
    ``2c`` of the average; ``t1`` and ``t3`` are plain first-hit times.

    Each predicate persists once it holds (potential, max and min are all
    monotone), so a satisfied predicate is never re-checked.
    """

    def __init__(self, loads: Sequence[int], c: int = DEFAULT_C, rounding: str = ROUND_HALF_AWAY):
        self.n = len(loads)
        self.m = sum(loads)
        self.c = c
        self.rounded = round_average(self.m, self.n, rounding)
        self.phi_n2 = potential_n2(loads)
        self.hist = Counter(loads)
        self.max = max(loads)
        self.min = min(loads)
        self.t1: int | None = None
        self.t2: int | None = None
        self.t3: int | None = None
        self.check(0)

    def update(self, a: int, b: int, na: int, nb: int) -> None:
        n, m = self.n, self.m
        self.phi_n2 -= _pair_change_n2(n, m, a, b, na, nb)
        hist = self.hist
        for x in (a, b):
            hist[x] -= 1
            if not hist[x]:
                del hist[x]
        hist[na] += 1
        hist[nb] += 1
        # at most n distinct loads remain, so a rescan is O(n) and rare
        if self.max not in hist:
            self.max = max(hist)
        if self.min not in hist:
            self.min = min(hist)

    def observe(self, rec: StepRecord, t: int) -> None:
        self.update(rec.load_u_before, rec.load_v_before, rec.load_u_after, rec.load_v_after)
        self.check(t)

    def check(self, t: int) -> None:
        n, m = self.n, self.m
        if self.t1 is None and self.phi_n2 < n ** 3:
            self.t1 = t
        # the second phase starts once the first has ended
        if (
            self.t2 is None
            and self.t1 is not None
            and n * self.max <= m + 2 * self.c * n
            and n * self.min >= m - 2 * self.c * n
        ):
            self.t2 = t
        if self.t3 is None and self.max <= self.rounded + 1 and self.min >= self.rounded - 1:
            self.t3 = t

    @property
    def discrepancy(self) -> int:
        return self.max - self.min

    @property
    def times(self) -> PhaseTimes:
        return PhaseTimes(self.t1, self.t2, self.t3)


def detect_phases(
    initial: Sequence[int],
    records: Iterable[StepRecord],
    c: int = DEFAULT_C,
    rounding: str = ROUND_HALF_AWAY,
) -> PhaseTimes:
    """Replay a complete step feed from ``initial`` and report first-hit times.

    Records are numbered by the state they produce: the first record yields
    the state at time 1.
    """
    det = PhaseDetector(initial, c, rounding)
    for t, rec in enumerate(records, start=1):
        det.observe(rec, t)
    return det.times
