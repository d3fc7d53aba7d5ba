"""Exit criteria. Each test records one PASS/FAIL line in the terminal summary."""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from balancelab.distributions import DistributionSpec
from balancelab.harness import coupling_experiment, fit_scaling, run_ensemble, selection_coverage_experiment
from balancelab.oracles import (
    InfeasibleConfiguration,
    check_height_reduction,
    check_mode_equivalence,
    check_overload,
    exact_oracle_counts,
    floor_floor,
    min_potential_with_tall_token,
    random_vectors,
    tall_token_configuration,
)
from balancelab.simulation import ExperimentConfig, run

pytestmark = pytest.mark.acceptance

SEED = 20240601
SWEEP_N = (16, 32, 64, 128)
SWEEP_REPS = 200


def point_config(n, m, reps=1, **kw):
    return ExperimentConfig(DistributionSpec("point", n=n, m=m), seed=SEED, replications=reps, **kw)


@pytest.fixture(scope="module")
def sweep():
    start = time.perf_counter()
    results = [run_ensemble(point_config(n, n * n, SWEEP_REPS, trace="none")) for n in SWEEP_N]
    return results, time.perf_counter() - start


def test_exact_oracles(criterion):
    start = time.perf_counter()
    vectors = random_vectors(np.random.default_rng(SEED), 1000, max_n=20, max_load=100)
    counts = exact_oracle_counts(vectors)
    elapsed = time.perf_counter() - start
    bad = counts["delta_violations"] + counts["identity_violations"] + counts["bound_violations"]
    ok = bad == 0 and elapsed < 10
    criterion(
        1,
        "exact oracles",
        ok,
        f"{counts['delta_pairs']} pairs, delta/identity/bound violations "
        f"{counts['delta_violations']}/{counts['identity_violations']}/{counts['bound_violations']}, "
        f"{elapsed:.1f}s (< 10s)",
    )
    assert ok


def test_monotone_traces(criterion):
    steps = violations = 0
    for rep in range(100):
        res = run(point_config(32, 1024, trace="full", stop="all"), replication=rep)
        loads = list(res.initial)
        n, m = len(loads), sum(loads)
        phi = sum((n * x - m) ** 2 for x in loads)
        hi, lo = max(loads), min(loads)
        for row in res.trace:
            loads[row.u], loads[row.v] = row.load_u_after, row.load_v_after
            new_phi = sum((n * x - m) ** 2 for x in loads)
            if new_phi > phi or max(loads) > hi or min(loads) < lo or sum(loads) != m:
                violations += 1
            phi, hi, lo = new_phi, max(loads), min(loads)
            steps += 1
    criterion(2, "monotone potential, max, min and conserved sum", violations == 0,
              f"100 traces, {steps} steps, {violations} violations")
    assert violations == 0


def rounded_average(loads):
    # half away from zero on a nonnegative average
    return math.floor(Fraction(sum(loads), len(loads)) + Fraction(1, 2))


def test_endpoint(sweep, criterion):
    results, _ = sweep
    extra = [
        run_ensemble(ExperimentConfig(DistributionSpec("uniform", n=48, m=4800), seed=SEED, replications=100)),
        run_ensemble(ExperimentConfig(DistributionSpec("bimodal", n=100, m=10_000, d=37), seed=SEED, replications=100)),
    ]
    records = [rec for res in results + extra for rec in res.records]
    finished = [rec for rec in records if not rec.capped]
    good = 0
    for rec in finished:
        r = rounded_average(rec.final)
        good += all(r - 1 <= x <= r + 1 for x in rec.final)
    ok = len(records) >= 1000 and good == len(finished)
    criterion(3, "almost-balanced endpoint", ok,
              f"{good}/{len(finished)} non-capped runs in [r-1, r+1], {len(records) - len(finished)} capped, "
              f"{len(records)} runs")
    assert ok


def test_scaling_fit(sweep, criterion):
    results, elapsed = sweep
    fit = fit_scaling(results)
    caps = sum(res.cap_hits for res in results)
    ok = fit.r_squared >= 0.95 and fit.slope > 0 and elapsed < 300
    medians = ", ".join(f"n={int(p[0])}: {p[3]:g}" for p in fit.points)
    criterion(4, "scaling of median t3 with n ln n + n ln delta", ok,
              f"R^2={fit.r_squared:.4f}, slope={fit.slope:.4f}, medians [{medians}], "
              f"{caps} cap hits, {elapsed:.0f}s single process")
    assert ok


def test_height_reduction_small_n(criterion):
    """Literal premise: potential <= n and a token above 2c on 8..32 nodes."""
    gen = np.random.default_rng(SEED)
    built = infeasible = 0
    for _ in range(200):
        n = int(gen.integers(8, 33))
        try:
            tall_token_configuration(n, gen)
            built += 1
        except InfeasibleConfiguration:
            infeasible += 1
    at_scale = check_height_reduction(SEED, count=10)
    ok = built == 200
    criterion(
        5,
        "height reduction mass >= 1/n for n in [8, 32]",
        ok,
        f"{infeasible}/200 configurations cannot exist: a token above normalized height 20 forces "
        f"potential >= {float(min_potential_with_tall_token(10))} > 32 >= n; "
        f"supplementary at n in [512, 640]: {at_scale.cases} tokens, {at_scale.violations} violations",
    )
    assert ok, "premise is unsatisfiable for n <= 32"


def test_mode_equivalence(criterion):
    res = check_mode_equivalence(SEED, count=50, steps=10_000)
    ok = res.passed and res.violations == 0
    criterion(6, "token mode does not change the load process", ok,
              f"50 instances x 10^4 steps, {res.violations} differing steps")
    assert ok


def test_coupling(criterion):
    gen = np.random.default_rng(SEED)
    passed = 0
    for k in range(50):
        n = int(gen.integers(2, 33))
        loads = gen.integers(-100, 101, size=n).tolist()
        passed += coupling_experiment(loads, 1000, seed=SEED + k)
    criterion(7, "negation coupling", passed == 50, f"{passed}/50 signed vectors, 1000 steps each")
    assert passed == 50


def test_overload_counting(criterion):
    res = check_overload(SEED, count=500, c=10)
    criterion(8, "fewer than n/2 overloaded nodes when potential <= n", res.passed,
              f"{res.cases} vectors, {res.violations} violations")
    assert res.passed


def test_selection_coverage(criterion):
    n, reps = 256, 500
    early = selection_coverage_experiment(n, int(n / 2 * math.log(n)), reps, seed=SEED)
    late = selection_coverage_experiment(n, int(8 * n * math.log(n)), reps, seed=SEED)
    ok = 0.05 <= early <= 0.95 and late <= 0.01
    criterion(9, "some node unselected until ~ n ln n steps", ok,
              f"unselected frequency {early:.3f} at (n/2) ln n, {late:.3f} at 8 n ln n")
    assert ok


def test_mutant_is_caught(criterion):
    vectors = random_vectors(np.random.default_rng(SEED), 1000, max_n=20, max_load=100)
    counts = exact_oracle_counts(vectors, floor_floor)
    caught = counts["delta_violations"] > 0
    criterion(10, "floor/floor update rule fails the exact oracles", caught,
              f"{counts['delta_violations']} drop violations under the mutant")
    assert caught
