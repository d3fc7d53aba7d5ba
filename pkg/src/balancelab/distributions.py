"""Initial load vectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import InvalidConfiguration, LoadVector

POINT = "point"
UNIFORM = "uniform"
BIMODAL = "bimodal"
EXPLICIT = "explicit"
KINDS = (POINT, UNIFORM, BIMODAL, EXPLICIT)


@dataclass(frozen=True)
class DistributionSpec:
    kind: str
    n: int | None = None
    m: int | None = None
    d: int | None = None
    values: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfiguration(f"dist: expected one of {KINDS}, got {self.kind!r}")
        if self.kind == EXPLICIT:
            if self.values is None:
                raise InvalidConfiguration("values: explicit distribution needs a vector")
            if self.n is not None and self.n != len(self.values):
                raise InvalidConfiguration(f"n: {self.n} does not match the {len(self.values)} given loads")
            return
        if self.n is None or self.n < 2:
            raise InvalidConfiguration("n: need at least 2 nodes")
        if self.m is None or self.m < 0:
            raise InvalidConfiguration("m: token count must be a non-negative integer")
        if self.kind == BIMODAL:
            if self.d is None or self.d < 0:
                raise InvalidConfiguration("d: bimodal offset must be a non-negative integer")
            if self.m % self.n:
                raise InvalidConfiguration("m: bimodal needs m divisible by n")
            if self.m // self.n - self.d < 0:
                raise InvalidConfiguration("d: bimodal offset exceeds the average load")

    @property
    def node_count(self) -> int:
        return len(self.values) if self.kind == EXPLICIT else self.n

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "n": self.node_count}
        if self.kind == EXPLICIT:
            out["values"] = list(self.values)
        else:
            out["m"] = self.m
        if self.kind == BIMODAL:
            out["d"] = self.d
        return out

    @classmethod
    def from_dict(cls, data: dict) -> DistributionSpec:
        values = data.get("values")
        return cls(
            kind=data["kind"],
            n=data.get("n"),
            m=data.get("m"),
            d=data.get("d"),
            values=tuple(values) if values is not None else None,
        )


def read_explicit(path: str | Path) -> tuple[int, ...]:
    """Read one integer per line; blank lines and ``#`` comments are skipped."""
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise InvalidConfiguration(f"file: line {lineno} is not an integer: {line!r}") from None
    return tuple(values)


def generate_initial(spec: DistributionSpec, gen: np.random.Generator | None = None) -> LoadVector:
    if spec.kind == POINT:
        return LoadVector([spec.m] + [0] * (spec.n - 1), nonnegative=True)
    if spec.kind == BIMODAL:
        avg, n = spec.m // spec.n, spec.n
        half = n // 2
        loads = [avg + spec.d] * half + [avg] * (n % 2) + [avg - spec.d] * half
        return LoadVector(loads, nonnegative=True)
    if spec.kind == EXPLICIT:
        return LoadVector(spec.values, nonnegative=True)
    if gen is None:
        raise InvalidConfiguration("uniform distribution needs a random generator")
    counts = gen.multinomial(spec.m, np.full(spec.n, 1.0 / spec.n))
    return LoadVector(counts.tolist(), nonnegative=True)
