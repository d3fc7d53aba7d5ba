"""Load vectors and the random pairwise balancing step on the complete graph."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

ROUND_HALF_AWAY = "half-away"
ROUND_HALF_EVEN = "half-even"
ROUNDING_RULES = (ROUND_HALF_AWAY, ROUND_HALF_EVEN)

# Pair draws are pulled from the generator in fixed-size blocks. The block size
# is part of the reproducibility contract: changing it changes every trace.
PAIR_BLOCK = 4096


class InvalidConfiguration(ValueError):
    """Raised when a configuration or input violates a precondition."""


def balance_pair(a: int, b: int) -> tuple[int, int]:
    """Balance two loads; the first node receives the ceiling of the mean."""
    s = a + b
    return -((-s) // 2), s // 2


BalanceFn = Callable[[int, int], tuple[int, int]]


def round_average(m: int, n: int, rule: str = ROUND_HALF_AWAY) -> int:
    """Round ``m / n`` to the nearest integer using exact integer arithmetic."""
    if n <= 0:
        raise InvalidConfiguration("n must be positive")
    if rule == ROUND_HALF_AWAY:
        q = (2 * abs(m) + n) // (2 * n)
        return q if m >= 0 else -q
    if rule == ROUND_HALF_EVEN:
        return round(Fraction(m, n))
    raise InvalidConfiguration(f"rounding: unknown rule {rule!r}")


@dataclass(frozen=True)
class DerivedQuantities:
    average: Fraction
    rounded_average: int
    discrepancy: int


class LoadVector:
    """Integer load per node.

    Entries may be negative; only the coupling construction uses that.
    """

    __slots__ = ("loads",)

    def __init__(self, loads: Iterable[int], *, nonnegative: bool = False):
        values = [int(x) for x in loads]
        if len(values) < 2:
            raise InvalidConfiguration("n: a load vector needs at least 2 nodes")
        if nonnegative and min(values) < 0:
            raise InvalidConfiguration("loads: negative entry in a non-negative vector")
        self.loads = values

    @property
    def n(self) -> int:
        return len(self.loads)

    @property
    def total(self) -> int:
        return sum(self.loads)

    def copy(self) -> LoadVector:
        return LoadVector(self.loads)

    def negated(self) -> LoadVector:
        return LoadVector([-x for x in self.loads])

    def derived(self, rounding: str = ROUND_HALF_AWAY) -> DerivedQuantities:
        return derived_quantities(self.loads, rounding)

    def __len__(self) -> int:
        return len(self.loads)

    def __getitem__(self, i: int) -> int:
        return self.loads[i]

    def __eq__(self, other: object) -> bool:
        if isinstance(other, LoadVector):
            return self.loads == other.loads
        return NotImplemented

    def __repr__(self) -> str:
        return f"LoadVector({self.loads})"


def derived_quantities(loads: Sequence[int], rounding: str = ROUND_HALF_AWAY) -> DerivedQuantities:
    n, m = len(loads), sum(loads)
    return DerivedQuantities(
        average=Fraction(m, n),
        rounded_average=round_average(m, n, rounding),
        discrepancy=max(loads) - min(loads),
    )


@dataclass(frozen=True)
class PairChoice:
    """Ordered pair; ``u`` receives the ceiling, ``v`` the floor."""

    u: int
    v: int


@dataclass(frozen=True)
class RngStream:
    """Named seed/stream pair backed by numpy's PCG64.

    Each purpose (pair draws, token shuffles, initial vectors) gets its own
    child stream, so adding a token overlay never perturbs the pair sequence.
    """

    seed: int
    stream: int = 0

    PAIRS = 0
    TOKENS = 1
    INITIAL = 2

    def generator(self, purpose: int = PAIRS) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, purpose))
        return np.random.Generator(np.random.PCG64(ss))


def decode_pair(index: int, n: int) -> PairChoice:
    """Map an index in ``[0, n(n-1))`` to an ordered pair bijectively."""
    u, w = divmod(index, n - 1)
    return PairChoice(u, w if w < u else w + 1)


def sample_pair(gen: np.random.Generator, n: int) -> PairChoice:
    if n < 2:
        raise InvalidConfiguration("n: need at least 2 nodes to sample a pair")
    return decode_pair(int(gen.integers(n * (n - 1))), n)


class PairStream:
    """Buffered iterator of uniform ordered pairs for one run."""

    def __init__(self, rng: RngStream | np.random.Generator, n: int):
        if n < 2:
            raise InvalidConfiguration("n: need at least 2 nodes to sample a pair")
        self.n = n
        self._gen = rng.generator(RngStream.PAIRS) if isinstance(rng, RngStream) else rng
        self._buf: list[int] = []
        self._pos = 0

    def __iter__(self) -> PairStream:
        return self

    def next_indices(self) -> tuple[int, int]:
        if self._pos >= len(self._buf):
            self._buf = self._gen.integers(self.n * (self.n - 1), size=PAIR_BLOCK).tolist()
            self._pos = 0
        k = self._buf[self._pos]
        self._pos += 1
        u, w = divmod(k, self.n - 1)
        return u, (w if w < u else w + 1)

    def __next__(self) -> PairChoice:
        return PairChoice(*self.next_indices())

    def take(self, count: int) -> np.ndarray:
        """Return the next ``count`` pairs as an array of shape (count, 2)."""
        chunks = [np.asarray(self._buf[self._pos:], dtype=np.int64)]
        have = len(chunks[0])
        while have < count:
            block = self._gen.integers(self.n * (self.n - 1), size=PAIR_BLOCK)
            chunks.append(block)
            have += PAIR_BLOCK
        flat = np.concatenate(chunks)
        used, rest = flat[:count], flat[count:]
        self._buf, self._pos = rest.tolist(), 0
        u, w = np.divmod(used, self.n - 1)
        return np.stack([u, np.where(w < u, w, w + 1)], axis=1)


@dataclass(frozen=True)
class StepRecord:
    t: int
    u: int
    v: int
    load_u_before: int
    load_v_before: int
    load_u_after: int
    load_v_after: int


def apply_pair(
    state: LoadVector, pair: PairChoice, t: int = 0, balance: BalanceFn = balance_pair
) -> StepRecord:
    loads = state.loads
    a, b = loads[pair.u], loads[pair.v]
    na, nb = balance(a, b)
    loads[pair.u], loads[pair.v] = na, nb
    return StepRecord(t, pair.u, pair.v, a, b, na, nb)


def step(state: LoadVector, pairs: PairStream, t: int = 0) -> StepRecord:
    """Draw one ordered pair and balance it in place."""
    return apply_pair(state, next(pairs), t)


def default_step_cap(n: int, discrepancy: int) -> int:
    x = n * np.log2(n) + n * np.log2(discrepancy + 1)
    return int(np.ceil(64 * x)) + 64 * n
