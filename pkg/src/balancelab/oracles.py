"""Randomized oracle checks over the process, its potential and its token rules.

Each ``check_*`` function returns a :class:`CheckResult`. Checks that exercise
the update rule accept a ``balance`` function so a deliberately wrong rule can
be substituted and shown to be caught.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .core import (
    BalanceFn,
    InvalidConfiguration,
    PairChoice,
    PairStream,
    RngStream,
    balance_pair,
    round_average,
)
from .harness import coupling_experiment
from .metrics import (
    DEFAULT_C,
    PhaseDetector,
    drop_matches_potential,
    exact_expected_potential_after_step,
    expected_drop_bound,
    gamma_fraction,
    overloaded_set,
    pairwise_square_sum_identity_check,
    potential_drop,
    potential_n2,
)
from .tokens import SKIP, BalanceMode, TokenLayout, apply_balanced_transfer

REDUCTION = Fraction(17, 20)


class InfeasibleConfiguration(InvalidConfiguration):
    pass


@dataclass
class CheckResult:
    name: str
    passed: bool
    cases: int
    violations: int
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}: {self.cases} cases, {self.violations} violations"
        return f"{text} ({self.detail})" if self.detail else text


def random_vectors(gen: np.random.Generator, count: int, max_n: int = 20, max_load: int = 100) -> list[list[int]]:
    out = []
    for _ in range(count):
        n = int(gen.integers(2, max_n + 1))
        out.append(gen.integers(0, max_load + 1, size=n).tolist())
    return out


# -- exact potential oracles ---------------------------------------------------


def delta_counts(vectors: Sequence[Sequence[int]], balance: BalanceFn = balance_pair) -> tuple[int, int]:
    """Return (ordered pairs checked, pairs where the closed-form drop is wrong or negative)."""
    pairs = bad = 0
    for loads in vectors:
        n = len(loads)
        for i in range(n):
            for j in range(n):
                if i != j:
                    pairs += 1
                    if potential_drop(loads, i, j).delta < 0 or not drop_matches_potential(loads, i, j, balance):
                        bad += 1
    return pairs, bad


def exact_oracle_counts(vectors: Sequence[Sequence[int]], balance: BalanceFn = balance_pair) -> dict[str, int]:
    """Violation counts of the drop formula, the square-sum identity and the drop bound."""
    pairs, bad = delta_counts(vectors, balance)
    return {
        "delta_pairs": pairs,
        "delta_violations": bad,
        "identity_violations": sum(not pairwise_square_sum_identity_check(v) for v in vectors),
        "bound_violations": sum(
            exact_expected_potential_after_step(v, balance) > expected_drop_bound(v) for v in vectors
        ),
    }


def check_delta(seed: int, balance: BalanceFn = balance_pair, count: int = 1000) -> CheckResult:
    vectors = random_vectors(np.random.default_rng([seed, 1]), count)
    pairs, bad = delta_counts(vectors, balance)
    return CheckResult("delta", bad == 0, pairs, bad, "closed-form drop vs before/after potential")


def check_identity(seed: int, count: int = 1000) -> CheckResult:
    vectors = random_vectors(np.random.default_rng([seed, 2]), count)
    bad = sum(not pairwise_square_sum_identity_check(v) for v in vectors)
    return CheckResult("identity", bad == 0, count, bad, "sum of pairwise squares == n * phi")


def check_expected_drop(seed: int, balance: BalanceFn = balance_pair, count: int = 1000) -> CheckResult:
    vectors = random_vectors(np.random.default_rng([seed, 3]), count)
    bad = sum(exact_expected_potential_after_step(v, balance) > expected_drop_bound(v) for v in vectors)
    return CheckResult("expected-drop", bad == 0, count, bad, "E[phi'] <= (1 - 1/n) phi + 1/2")


# -- trace invariants ----------------------------------------------------------


def trace_violations(initial: Sequence[int], steps: int, pairs: PairStream, balance: BalanceFn = balance_pair) -> dict[str, int]:
    """Replay ``steps`` steps, recomputing sum, potential, max and min from scratch."""
    loads = list(initial)
    total, phi, hi, lo = sum(loads), potential_n2(loads), max(loads), min(loads)
    n = len(loads)
    v = {"sum": 0, "phi": 0, "max": 0, "min": 0, "range": 0}
    for _ in range(steps):
        i, j = pairs.next_indices()
        a, b = loads[i], loads[j]
        na, nb = balance(a, b)
        loads[i], loads[j] = na, nb
        if not (min(a, b) <= na <= max(a, b) and min(a, b) <= nb <= max(a, b)):
            v["range"] += 1
        s = sum(loads)
        # compare potentials on a common n**2 scale around each vector's own average
        p = sum((n * x - s) ** 2 for x in loads)
        if s != total:
            v["sum"] += 1
        if p > phi:
            v["phi"] += 1
        if max(loads) > hi:
            v["max"] += 1
        if min(loads) < lo:
            v["min"] += 1
        total, phi, hi, lo = s, p, max(loads), min(loads)
    return v


def check_conservation(seed: int, balance: BalanceFn = balance_pair, count: int = 50, steps: int = 2000) -> CheckResult:
    gen = np.random.default_rng([seed, 4])
    bad = 0
    for k, loads in enumerate(random_vectors(gen, count, max_n=32, max_load=200)):
        v = trace_violations(loads, steps, PairStream(RngStream(seed, k), len(loads)), balance)
        bad += sum(v.values())
    return CheckResult("conservation", bad == 0, count * steps, bad, "sum, potential, max, min and pair range")


# -- token modes ----------------------------------------------------------------


def mode_equivalence_instance(initial: Sequence[int], steps: int, seed: int, stream: int = 0, c: int = DEFAULT_C) -> int:
    """Count steps where any token layout's stack sizes differ from the load vector."""
    rs = RngStream(seed, stream)
    pairs = PairStream(rs, len(initial))
    token_gen = rs.generator(RngStream.TOKENS)
    loads = list(initial)
    layouts = [
        (TokenLayout.from_loads(initial), BalanceMode.stack()),
        (TokenLayout.from_loads(initial), BalanceMode.skip()),
        (TokenLayout.from_loads(initial), BalanceMode.shuffle(c)),
    ]
    mismatches = 0
    for _ in range(steps):
        u, v = pairs.next_indices()
        loads[u], loads[v] = balance_pair(loads[u], loads[v])
        pair = PairChoice(u, v)
        for layout, mode in layouts:
            apply_balanced_transfer(layout, pair, mode, token_gen)
        if any(layout.loads() != loads for layout, _ in layouts):
            mismatches += 1
    return mismatches


def random_token_instance(gen: np.random.Generator, max_n: int = 32, max_m: int = 512) -> list[int]:
    n = int(gen.integers(2, max_n + 1))
    m = int(gen.integers(0, max_m + 1))
    if gen.random() < 0.5:
        return gen.multinomial(m, np.full(n, 1.0 / n)).tolist()
    return [m] + [0] * (n - 1)


def check_mode_equivalence(seed: int, count: int = 50, steps: int = 10_000) -> CheckResult:
    gen = np.random.default_rng([seed, 5])
    bad = 0
    for k in range(count):
        if mode_equivalence_instance(random_token_instance(gen), steps, seed, k):
            bad += 1
    return CheckResult("mode-equivalence", bad == 0, count, bad, f"{steps} steps, stack/skip/shuffle vs loads")


def skip_height_increases(initial: Sequence[int], steps: int, seed: int, stream: int = 0) -> int:
    layout = TokenLayout.from_loads(initial)
    pairs = PairStream(RngStream(seed, stream), len(initial))
    mode = BalanceMode.skip()
    increases = 0
    for _ in range(steps):
        pair = PairChoice(*pairs.next_indices())
        before = {tok: h for node in (pair.u, pair.v) for h, tok in enumerate(layout.stacks[node])}
        apply_balanced_transfer(layout, pair, mode)
        for tok, h in before.items():
            if layout.height(tok) > h:
                increases += 1
    return increases


def check_skip_heights(seed: int, count: int = 30, steps: int = 2000) -> CheckResult:
    gen = np.random.default_rng([seed, 6])
    bad = sum(skip_height_increases(random_token_instance(gen), steps, seed, k) for k in range(count))
    return CheckResult("skip-heights", bad == 0, count * steps, bad, "no token height increases under skip mode")


# -- height-reduction enumeration ----------------------------------------------


def min_potential_with_tall_token(c: int = DEFAULT_C) -> Fraction:
    """Lower bound on the potential of any vector holding a token of normalized height > 2c.

    The token's node has load at least round(avg) + 2c + 2 >= avg + 2c + 3/2.
    """
    return Fraction(4 * c + 3, 2) ** 2


def reduction_mass(loads: Sequence[int], node: int, height: int, rounded: int | None = None) -> Fraction:
    """Probability, over all n(n-1) ordered pairs, that a skip-mode step reduces
    the normalized height of the token at ``(node, height)`` to at most 17/20 of its value.
    """
    n = len(loads)
    if rounded is None:
        rounded = round_average(sum(loads), n)
    old = height - rounded
    hits = 0
    mode = BalanceMode(SKIP)
    for other in range(n):
        if other == node:
            continue
        for pair in (PairChoice(0, 1), PairChoice(1, 0)):
            layout = TokenLayout(
                [[("a", h) for h in range(loads[node])], [("b", h) for h in range(loads[other])]],
                rounded_average=rounded,
            )
            apply_balanced_transfer(layout, pair, mode)
            new = layout.height(("a", height)) - rounded
            if new <= REDUCTION * old:
                hits += 1
    # pairs not touching the node leave the token where it is
    return Fraction(hits, n * (n - 1))


def tall_tokens(loads: Sequence[int], c: int = DEFAULT_C) -> list[tuple[int, int]]:
    r = round_average(sum(loads), len(loads))
    return [(i, h) for i, x in enumerate(loads) for h in range(max(r + 2 * c + 1, 0), x)]


def tall_token_configuration(n: int, gen: np.random.Generator, c: int = DEFAULT_C, attempts: int = 200) -> list[int]:
    """Random vector with potential <= n holding a token of normalized height > 2c.

    One node is raised by ``2c + 2 + extra`` over an integer base while as many
    other nodes drop by one; a few random unit moves and spare tokens are then
    added as long as the potential stays within budget.
    """
    if n < min_potential_with_tall_token(c):
        raise InfeasibleConfiguration(
            f"no vector on {n} nodes has potential <= n and a token above normalized "
            f"height {2 * c}: such a vector has potential >= {float(min_potential_with_tall_token(c))}"
        )
    for _ in range(attempts):
        base = int(gen.integers(0, 40)) + 1
        raise_by = 2 * c + 2 + int(gen.integers(0, 3))
        if raise_by * raise_by + raise_by > n or raise_by >= n:
            raise_by = 2 * c + 2
        loads = [base] * n
        tall = int(gen.integers(n))
        loads[tall] += raise_by
        others = [i for i in range(n) if i != tall]
        for i in gen.choice(others, size=raise_by, replace=False):
            loads[i] -= 1
        for _ in range(int(gen.integers(0, 8))):
            i, j = gen.choice(others, size=2, replace=False)
            if loads[i] > 0:
                loads[i] -= 1
                loads[j] += 1
        for i in gen.choice(others, size=int(gen.integers(0, 6)), replace=False):
            loads[i] += 1
        if potential_n2(loads) <= n ** 3 and tall_tokens(loads, c):
            return loads
    raise InfeasibleConfiguration(f"could not build a configuration on {n} nodes")


def height_reduction_violations(configs: Sequence[Sequence[int]], c: int = DEFAULT_C) -> tuple[int, int, Fraction]:
    """Return (tokens checked, tokens with mass < 1/n, smallest mass times n)."""
    checked = bad = 0
    worst = None
    for loads in configs:
        n = len(loads)
        r = round_average(sum(loads), n)
        for node, h in tall_tokens(loads, c):
            mass = reduction_mass(loads, node, h, r)
            checked += 1
            if mass < Fraction(1, n):
                bad += 1
            worst = mass * n if worst is None else min(worst, mass * n)
    return checked, bad, worst if worst is not None else Fraction(0)


def check_height_reduction(seed: int, count: int = 20, n_range: tuple[int, int] = (512, 640), c: int = DEFAULT_C) -> CheckResult:
    gen = np.random.default_rng([seed, 7])
    configs = [tall_token_configuration(int(gen.integers(n_range[0], n_range[1] + 1)), gen, c) for _ in range(count)]
    checked, bad, worst = height_reduction_violations(configs, c)
    return CheckResult(
        "height-reduction",
        bad == 0 and checked > 0,
        checked,
        bad,
        f"{count} configurations, n in [{n_range[0]}, {n_range[1]}], min n*mass = {float(worst):.3f}",
    )


# -- coupling, overload, gamma ---------------------------------------------------


def check_coupling(seed: int, balance: BalanceFn = balance_pair, count: int = 50, steps: int = 1000) -> CheckResult:
    gen = np.random.default_rng([seed, 8])
    bad = 0
    for k in range(count):
        n = int(gen.integers(2, 33))
        loads = gen.integers(-100, 101, size=n).tolist()
        if not coupling_experiment(loads, steps, seed * 1000 + k, balance):
            bad += 1
    return CheckResult("coupling", bad == 0, count, bad, f"mirrored run from -l, {steps} steps")


def low_potential_vector(gen: np.random.Generator, n: int, c: int = DEFAULT_C) -> list[int]:
    """Random vector with potential <= n, biased toward a few tall nodes."""
    while True:
        base = int(gen.integers(c, 200))
        loads = [base] * n
        budget = n
        tall_count = int(gen.integers(0, max(1, n // (c * c)) + 1))
        nodes = gen.permutation(n).tolist()
        drop = 0
        for i in nodes[:tall_count]:
            d = int(gen.integers(1, max(2, math.isqrt(budget // max(tall_count, 1)) + 1)))
            loads[i] += d
            drop += d
        for i in nodes[tall_count:tall_count + drop]:
            loads[i] -= 1
        for _ in range(int(gen.integers(0, n))):
            i, j = gen.integers(n, size=2)
            loads[i] += 1
            loads[j] -= 1
        if potential_n2(loads) <= budget * n * n:
            return loads


def check_overload(seed: int, count: int = 500, c: int = DEFAULT_C) -> CheckResult:
    gen = np.random.default_rng([seed, 9])
    bad = nonempty = 0
    for _ in range(count):
        n = int(gen.integers(2, 1025))
        loads = low_potential_vector(gen, n, c)
        s = overloaded_set(loads, c)
        nonempty += bool(s)
        if 2 * len(s) >= n:
            bad += 1
    return CheckResult("overload", bad == 0, count, bad, f"|S| < n/2 under phi <= n; {nonempty} with S nonempty")


def post_phase2_states(seed: int, count: int = 40, c: int = DEFAULT_C) -> list[list[int]]:
    """States sampled at and after t2 from point-mass and uniform runs."""
    gen = np.random.default_rng([seed, 10])
    states = []
    for k in range(count):
        n = int(gen.integers(4, 65))
        m = int(gen.integers(0, 50)) * n + int(gen.integers(0, n))
        loads = [m] + [0] * (n - 1) if k % 2 else gen.multinomial(m, np.full(n, 1.0 / n)).tolist()
        det = PhaseDetector(loads, c)
        pairs = PairStream(RngStream(seed, 10_000 + k), n)
        t = 0
        while det.t2 is None or t < det.t2 + 4 * n:
            u, v = pairs.next_indices()
            a, b = loads[u], loads[v]
            loads[u], loads[v] = balance_pair(a, b)
            t += 1
            det.update(a, b, loads[u], loads[v])
            det.check(t)
            if det.t2 is not None and (t - det.t2) % n == 0:
                states.append(list(loads))
    return states


def check_gamma(seed: int, c: int = DEFAULT_C) -> CheckResult:
    states = post_phase2_states(seed, c=c)
    bound = Fraction(1, 4 * c + 2)
    bad = sum(gamma_fraction(s) < bound for s in states)
    return CheckResult("gamma", bad == 0, len(states), bad, f"fraction at or below rounded average >= 1/{4 * c + 2}")


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "delta": check_delta,
    "identity": check_identity,
    "expected-drop": check_expected_drop,
    "conservation": check_conservation,
    "mode-equivalence": check_mode_equivalence,
    "skip-heights": check_skip_heights,
    "height-reduction": check_height_reduction,
    "coupling": check_coupling,
    "overload": check_overload,
    "gamma": check_gamma,
}
USES_BALANCE = {"delta", "expected-drop", "conservation", "coupling"}


def floor_floor(a: int, b: int) -> tuple[int, int]:
    """Deliberately wrong update rule: both nodes get the floor."""
    s = (a + b) // 2
    return s, s


MUTANTS: dict[str, BalanceFn] = {"floor-floor": floor_floor}


def run_checks(seed: int, names: Sequence[str] | None = None, balance: BalanceFn = balance_pair) -> list[CheckResult]:
    names = list(CHECKS) if not names else list(names)
    unknown = [x for x in names if x not in CHECKS]
    if unknown:
        raise InvalidConfiguration(f"checks: unknown check(s) {', '.join(unknown)}; choose from {', '.join(CHECKS)}")
    out = []
    for name in names:
        fn = CHECKS[name]
        out.append(fn(seed, balance) if name in USES_BALANCE else fn(seed))
    return out
