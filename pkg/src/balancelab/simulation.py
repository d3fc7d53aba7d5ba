"""Single seeded runs of the balancing process with phase detection."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple

from .core import (
    ROUND_HALF_AWAY,
    ROUNDING_RULES,
    InvalidConfiguration,
    LoadVector,
    PairChoice,
    PairStream,
    RngStream,
    balance_pair,
    default_step_cap,
)
from .distributions import DistributionSpec, generate_initial
from .metrics import DEFAULT_C, PhaseDetector, PhaseTimes, potential_n2
from .tokens import MODES, BalanceMode, TokenLayout, apply_balanced_transfer

TRACE_COLUMNS = (
    "t",
    "u",
    "v",
    "load_u_before",
    "load_v_before",
    "load_u_after",
    "load_v_after",
    "phi_times_n2",
    "max",
    "min",
)
STOP_RULES = ("t1", "t2", "t3", "all")


class TraceRow(NamedTuple):
    t: int
    u: int
    v: int
    load_u_before: int
    load_v_before: int
    load_u_after: int
    load_v_after: int
    phi_times_n2: int
    max: int
    min: int


def parse_granularity(spec: str) -> tuple[str, int]:
    """``full``, ``phases``, ``none`` or ``every:K``."""
    if spec in ("full", "phases", "none"):
        return spec, 1
    kind, _, k = spec.partition(":")
    if kind == "every" and k.isdigit() and int(k) > 0:
        return "every", int(k)
    raise InvalidConfiguration(f"trace: expected full, phases, none or every:K, got {spec!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    distribution: DistributionSpec
    seed: int = 0
    replications: int = 1
    mode: str | None = None
    c: int = DEFAULT_C
    step_cap: int | None = None
    trace: str = "phases"
    stop: str = "t3"
    rounding: str = ROUND_HALF_AWAY
    token_dump_every: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidConfiguration("replications: must be at least 1")
        if self.mode is not None and self.mode not in MODES:
            raise InvalidConfiguration(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.c < 1:
            raise InvalidConfiguration("c: band constant must be positive")
        if self.step_cap is not None and self.step_cap < 0:
            raise InvalidConfiguration("step_cap: must be non-negative")
        if self.stop not in STOP_RULES:
            raise InvalidConfiguration(f"stop: expected one of {STOP_RULES}, got {self.stop!r}")
        if self.rounding not in ROUNDING_RULES:
            raise InvalidConfiguration(f"rounding: expected one of {ROUNDING_RULES}, got {self.rounding!r}")
        if self.token_dump_every < 0:
            raise InvalidConfiguration("token_dump_every: must be non-negative")
        if self.token_dump_every and self.mode is None:
            raise InvalidConfiguration("token_dump_every: a token dump needs --mode")
        parse_granularity(self.trace)
        if self.mode is not None:
            self.balance_mode()

    def balance_mode(self) -> BalanceMode | None:
        return None if self.mode is None else BalanceMode(self.mode, self.c)

    def to_dict(self) -> dict:
        return {
            "distribution": self.distribution.to_dict(),
            "seed": self.seed,
            "replications": self.replications,
            "mode": self.mode,
            "c": self.c,
            "step_cap": self.step_cap,
            "trace": self.trace,
            "stop": self.stop,
            "rounding": self.rounding,
            "token_dump_every": self.token_dump_every,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        data = dict(data)
        data["distribution"] = DistributionSpec.from_dict(data["distribution"])
        return cls(**data)


@dataclass
class RunResult:
    seed: int
    stream: int
    initial: list[int]
    final: list[int]
    phases: PhaseTimes
    steps: int
    step_cap: int
    capped: bool
    trace: list[TraceRow] = field(default_factory=list)
    phi_samples: list[tuple[int, int]] = field(default_factory=list)
    token_dump: list[tuple[int, int, int, int]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.initial)

    @property
    def m(self) -> int:
        return sum(self.initial)

    @property
    def delta0(self) -> int:
        return max(self.initial) - min(self.initial)

    def final_digest(self) -> str:
        return hashlib.sha256(",".join(map(str, self.final)).encode()).hexdigest()

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "stream": self.stream,
            "n": self.n,
            "m": self.m,
            "delta0": self.delta0,
            "phi0_times_n2": potential_n2(self.initial),
            "phases": self.phases.as_dict(),
            "steps": self.steps,
            "step_cap": self.step_cap,
            "capped": self.capped,
            "final_digest": self.final_digest(),
            "final_discrepancy": max(self.final) - min(self.final),
            "phi_samples": [list(p) for p in self.phi_samples],
        }


def _stopped(det: PhaseDetector, rule: str) -> bool:
    if rule == "t3":
        return det.t3 is not None
    if rule == "t1":
        return det.t1 is not None
    if rule == "t2":
        return det.t2 is not None
    return det.t1 is not None and det.t2 is not None and det.t3 is not None


def run(
    config: ExperimentConfig, replication: int = 0, initial: LoadVector | None = None
) -> RunResult:
    """Run one replication until the stop rule fires or the step cap is hit.

    Trace rows and phase times use the index of the state a step produces, so
    the first step yields time 1. Phi is sampled at time 0 and every n steps.
    """
    rs = RngStream(config.seed, replication)
    if initial is None:
        initial = generate_initial(config.distribution, rs.generator(RngStream.INITIAL))
    loads = list(initial.loads)
    n = len(loads)
    start = list(loads)
    cap = config.step_cap
    if cap is None:
        cap = default_step_cap(n, max(loads) - min(loads))

    det = PhaseDetector(loads, config.c, config.rounding)
    pairs = PairStream(rs, n)
    mode = config.balance_mode()
    layout = TokenLayout.from_loads(loads, config.rounding) if mode is not None else None
    token_gen = rs.generator(RngStream.TOKENS) if mode is not None else None
    dump_every = config.token_dump_every

    granularity, every = parse_granularity(config.trace)
    trace: list[TraceRow] = []
    phi_samples = [(0, det.phi_n2)]
    token_dump: list[tuple[int, int, int, int]] = []
    if layout is not None and dump_every:
        token_dump.extend((0, tok, node, h) for tok, node, h in layout.triples())

    t = 0
    stop = config.stop
    while not _stopped(det, stop) and t < cap:
        u, v = pairs.next_indices()
        a, b = loads[u], loads[v]
        na, nb = balance_pair(a, b)
        if layout is not None:
            apply_balanced_transfer(layout, PairChoice(u, v), mode, token_gen)
        loads[u], loads[v] = na, nb
        t += 1
        before = (det.t1, det.t2, det.t3)
        det.update(a, b, na, nb)
        det.check(t)
        if granularity == "full" or (granularity == "every" and t % every == 0) or (
            granularity == "phases" and before != (det.t1, det.t2, det.t3)
        ):
            trace.append(TraceRow(t, u, v, a, b, na, nb, det.phi_n2, det.max, det.min))
        if t % n == 0:
            phi_samples.append((t, det.phi_n2))
        if dump_every and t % dump_every == 0:
            token_dump.extend((t, tok, node, h) for tok, node, h in layout.triples())

    if layout is not None and layout.loads() != loads:
        raise AssertionError("token layout diverged from the load vector")
    if phi_samples[-1][0] != t:
        phi_samples.append((t, det.phi_n2))
    return RunResult(
        seed=config.seed,
        stream=replication,
        initial=start,
        final=loads,
        phases=det.times,
        steps=t,
        step_cap=cap,
        capped=not _stopped(det, stop),
        trace=trace,
        phi_samples=phi_samples,
        token_dump=token_dump,
    )
