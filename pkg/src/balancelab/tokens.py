"""Distinguishable tokens stacked on nodes, with the three transfer rules.

The underlying process only sees stack sizes. Token identities exist so that
heights can be followed through a run; the transfer rule (the mode) never
changes the loads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator, Sequence

import numpy as np

from .core import (
    ROUND_HALF_AWAY,
    DerivedQuantities,
    InvalidConfiguration,
    PairChoice,
    balance_pair,
    round_average,
)

STACK = "stack"
SKIP = "skip"
SHUFFLE = "shuffle"
MODES = (STACK, SKIP, SHUFFLE)
MIN_BAND_CONSTANT = 10


class InvalidTransfer(ValueError):
    pass


class UnknownToken(LookupError):
    pass


@dataclass(frozen=True)
class BalanceMode:
    kind: str = STACK
    c: int = MIN_BAND_CONSTANT

    def __post_init__(self):
        if self.kind not in MODES:
            raise InvalidConfiguration(f"mode: expected one of {MODES}, got {self.kind!r}")
        if self.kind == SHUFFLE and self.c < MIN_BAND_CONSTANT:
            raise InvalidConfiguration(f"c: shuffle mode needs c >= {MIN_BAND_CONSTANT}")

    @classmethod
    def stack(cls) -> BalanceMode:
        return cls(STACK)

    @classmethod
    def skip(cls) -> BalanceMode:
        return cls(SKIP)

    @classmethod
    def shuffle(cls, c: int = MIN_BAND_CONSTANT) -> BalanceMode:
        return cls(SHUFFLE, c)


class TokenLayout:
    """Per-node stacks of token ids; index in the stack is the token's height."""

    def __init__(
        self,
        stacks: Iterable[Iterable[Hashable]],
        rounded_average: int | None = None,
        rounding: str = ROUND_HALF_AWAY,
    ):
        self.stacks = [list(s) for s in stacks]
        self._where: dict[Hashable, tuple[int, int]] = {}
        for node, stack in enumerate(self.stacks):
            for h, tok in enumerate(stack):
                if tok in self._where:
                    raise InvalidConfiguration(f"tokens: id {tok!r} appears twice")
                self._where[tok] = (node, h)
        if rounded_average is None:
            rounded_average = round_average(len(self._where), len(self.stacks), rounding)
        self.rounded_average = rounded_average

    @classmethod
    def from_loads(cls, loads: Sequence[int], rounding: str = ROUND_HALF_AWAY) -> TokenLayout:
        if min(loads) < 0:
            raise InvalidConfiguration("loads: tokens need non-negative loads")
        stacks, nxt = [], 0
        for x in loads:
            stacks.append(list(range(nxt, nxt + x)))
            nxt += x
        return cls(stacks, rounding=rounding)

    @property
    def n(self) -> int:
        return len(self.stacks)

    @property
    def token_count(self) -> int:
        return len(self._where)

    def loads(self) -> list[int]:
        return [len(s) for s in self.stacks]

    def locate(self, token: Hashable) -> tuple[int, int]:
        try:
            return self._where[token]
        except KeyError:
            raise UnknownToken(token) from None

    def height(self, token: Hashable) -> int:
        return self.locate(token)[1]

    def heights(self) -> dict[Hashable, int]:
        return {tok: h for tok, (_, h) in self._where.items()}

    def triples(self) -> Iterator[tuple[Hashable, int, int]]:
        """Yield ``(token, node, height)`` for every token, node by node."""
        for node, stack in enumerate(self.stacks):
            for h, tok in enumerate(stack):
                yield tok, node, h

    def copy(self) -> TokenLayout:
        return TokenLayout(self.stacks, self.rounded_average)

    def _reindex(self, node: int, start: int = 0) -> None:
        stack = self.stacks[node]
        for h in range(start, len(stack)):
            self._where[stack[h]] = (node, h)

    def check_consistent(self) -> None:
        seen = 0
        for node, stack in enumerate(self.stacks):
            for h, tok in enumerate(stack):
                assert self._where[tok] == (node, h), (tok, node, h)
                seen += 1
        assert seen == len(self._where)


def _check_nodes(layout: TokenLayout, src: int, dst: int) -> None:
    if src == dst:
        raise InvalidTransfer("transfer needs two distinct nodes")
    if not (0 <= src < layout.n and 0 <= dst < layout.n):
        raise InvalidTransfer("node index out of range")


def transfer_stack(layout: TokenLayout, src: int, dst: int, k: int) -> TokenLayout:
    """Move the ``k`` topmost tokens of ``src`` onto ``dst``, keeping their order."""
    _check_nodes(layout, src, dst)
    s, d = layout.stacks[src], layout.stacks[dst]
    if k < 0 or k > len(s):
        raise InvalidTransfer(f"cannot move {k} tokens from a stack of {len(s)}")
    if k == 0:
        return layout
    base = len(d)
    d.extend(s[len(s) - k:])
    del s[len(s) - k:]
    layout._reindex(dst, base)
    return layout


def transfer_skip(layout: TokenLayout, src: int, dst: int, k: int) -> TokenLayout:
    """Move every other token from the top of ``src``, ``k`` in total.

    Selected heights are top, top-2, top-4, ...; the gaps on ``src`` close up
    and the moved tokens land on ``dst`` lowest first.
    """
    _check_nodes(layout, src, dst)
    s, d = layout.stacks[src], layout.stacks[dst]
    size = len(s)
    if k < 0 or k > (size + 1) // 2:
        raise InvalidTransfer(f"skip selection yields at most {(size + 1) // 2} of {size} tokens, asked {k}")
    if k == 0:
        return layout
    lo = size - 2 * k + 1
    moved = s[lo::2]
    kept = s[lo + 1::2]
    del s[lo:]
    s.extend(kept)
    base = len(d)
    d.extend(moved)
    layout._reindex(src, lo)
    layout._reindex(dst, base)
    return layout


def band_heights(layout: TokenLayout, node: int, c: int) -> range:
    """Heights on ``node`` whose normalized height lies in [2, 2c]."""
    r = layout.rounded_average
    lo = max(r + 2, 0)
    hi = min(r + 2 * c, len(layout.stacks[node]) - 1)
    return range(lo, hi + 1)


def shuffle_band(layout: TokenLayout, node: int, c: int, gen: np.random.Generator) -> None:
    band = band_heights(layout, node, c)
    if len(band) < 2:
        return
    stack = layout.stacks[node]
    segment = stack[band.start:band.stop]
    order = gen.permutation(len(segment))
    stack[band.start:band.stop] = [segment[i] for i in order]
    for h in band:
        layout._where[stack[h]] = (node, h)


def transfer_shuffle_stack(
    layout: TokenLayout, src: int, dst: int, k: int, c: int, gen: np.random.Generator
) -> TokenLayout:
    _check_nodes(layout, src, dst)
    if k < 0 or k > len(layout.stacks[src]):
        raise InvalidTransfer(f"cannot move {k} tokens from a stack of {len(layout.stacks[src])}")
    shuffle_band(layout, src, c, gen)
    shuffle_band(layout, dst, c, gen)
    return transfer_stack(layout, src, dst, k)


def transfer_size(load_u: int, load_v: int) -> tuple[int, int, int]:
    """Return ``(src, dst, k)`` in pair-local terms: 0 is u, 1 is v."""
    new_u, _ = balance_pair(load_u, load_v)
    if new_u < load_u:
        return 0, 1, load_u - new_u
    return 1, 0, new_u - load_u


def apply_balanced_transfer(
    layout: TokenLayout,
    pair: PairChoice,
    mode: BalanceMode,
    gen: np.random.Generator | None = None,
) -> TokenLayout:
    nodes = (pair.u, pair.v)
    s, d, k = transfer_size(len(layout.stacks[pair.u]), len(layout.stacks[pair.v]))
    src, dst = nodes[s], nodes[d]
    if mode.kind == STACK:
        return transfer_stack(layout, src, dst, k)
    if mode.kind == SKIP:
        return transfer_skip(layout, src, dst, k)
    if gen is None:
        raise InvalidConfiguration("shuffle mode needs a random generator")
    return transfer_shuffle_stack(layout, src, dst, k, mode.c, gen)


def normalized_height(
    layout: TokenLayout, token: Hashable, derived: DerivedQuantities | int | None = None
) -> int:
    if derived is None:
        r = layout.rounded_average
    elif isinstance(derived, DerivedQuantities):
        r = derived.rounded_average
    else:
        r = derived
    return layout.height(token) - r
