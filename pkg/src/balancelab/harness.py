"""Seeded ensembles, convergence-time summaries and the scaling fit."""

from __future__ import annotations

import csv
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import BalanceFn, InvalidConfiguration, LoadVector, PairStream, RngStream, balance_pair
from .metrics import almost_balanced
from .simulation import ExperimentConfig, RunResult, run

CSV_COLUMNS = ("replication", "seed", "t1", "t2", "t3", "delta0", "capped")


@dataclass
class ReplicationRecord:
    replication: int
    seed: int
    t1: int | None
    t2: int | None
    t3: int | None
    delta0: int
    capped: bool
    steps: int
    final_ok: bool
    final_digest: str
    # in-memory only; not serialized
    final: list[int] | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_run(cls, replication: int, res: RunResult, rounding: str) -> ReplicationRecord:
        return cls(
            replication=replication,
            seed=res.seed,
            t1=res.phases.t1,
            t2=res.phases.t2,
            t3=res.phases.t3,
            delta0=res.delta0,
            capped=res.capped,
            steps=res.steps,
            # re-derived from the raw final vector, not from the detector
            final_ok=almost_balanced(res.final, rounding),
            final_digest=res.final_digest(),
            final=res.final,
        )

    def to_dict(self) -> dict:
        return {
            "replication": self.replication,
            "seed": self.seed,
            "t1": self.t1,
            "t2": self.t2,
            "t3": self.t3,
            "delta0": self.delta0,
            "capped": self.capped,
            "steps": self.steps,
            "final_ok": self.final_ok,
            "final_digest": self.final_digest,
        }


def _describe(values: Sequence[int]) -> dict:
    if not values:
        return {"count": 0, "mean": None, "median": None, "p95": None}
    return {
        "count": len(values),
        "mean": float(statistics.fmean(values)),
        "median": float(statistics.median(values)),
        "p95": float(np.percentile(values, 95)),
    }


@dataclass
class EnsembleResult:
    config: ExperimentConfig
    n: int
    m: int
    records: list[ReplicationRecord]

    @property
    def cap_hits(self) -> int:
        return sum(r.capped for r in self.records)

    @property
    def delta0(self) -> float:
        return float(statistics.median(r.delta0 for r in self.records))

    def phase_values(self, name: str) -> list[int]:
        return [getattr(r, name) for r in self.records if getattr(r, name) is not None]

    def summary(self) -> dict:
        return {
            "replications": len(self.records),
            "cap_hits": self.cap_hits,
            "final_ok": sum(r.final_ok for r in self.records),
            "delta0_median": self.delta0,
            "delta0_min": min(r.delta0 for r in self.records),
            "delta0_max": max(r.delta0 for r in self.records),
            "t1": _describe(self.phase_values("t1")),
            "t2": _describe(self.phase_values("t2")),
            "t3": _describe(self.phase_values("t3")),
        }

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n": self.n,
            "m": self.m,
            "summary": self.summary(),
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> EnsembleResult:
        records = [ReplicationRecord(**r) for r in data["records"]]
        return cls(ExperimentConfig.from_dict(data["config"]), data["n"], data["m"], records)

    @classmethod
    def load(cls, path: str | Path) -> EnsembleResult:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.records:
                w.writerow(
                    [r.replication, r.seed]
                    + ["" if x is None else x for x in (r.t1, r.t2, r.t3)]
                    + [r.delta0, int(r.capped)]
                )


def _run_one(args: tuple[ExperimentConfig, int]) -> ReplicationRecord:
    config, rep = args
    quiet = config if config.trace == "none" else _without_trace(config)
    return ReplicationRecord.from_run(rep, run(quiet, rep), config.rounding)


def _without_trace(config: ExperimentConfig) -> ExperimentConfig:
    data = config.to_dict()
    data["trace"] = "none"
    data["token_dump_every"] = 0
    return ExperimentConfig.from_dict(data)


def run_ensemble(config: ExperimentConfig, workers: int = 1) -> EnsembleResult:
    """Run ``config.replications`` independent runs; replication r uses stream r.

    Results are collected in replication order, so the outcome does not depend
    on ``workers``.
    """
    tasks = [(config, rep) for rep in range(config.replications)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        records = [_run_one(t) for t in tasks]
    records.sort(key=lambda r: r.replication)
    first = records[0].final
    return EnsembleResult(config, len(first), sum(first), records)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    points: tuple[tuple[int, float, float, float], ...]

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "model": "median_t3 = slope * (n ln n + n ln delta) + intercept",
            "points": [
                {"n": n, "delta": d, "x": x, "median_t3": y} for n, d, x, y in self.points
            ],
        }


def scaling_x(n: int, delta: float) -> float:
    return n * math.log(n) + n * math.log(delta)


def fit_line(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Ordinary least squares ``y = a x + b``; returns ``(a, b, R^2)``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if np.ptp(x) == 0:
        raise InvalidConfiguration("sweep: all x values are equal, the fit is degenerate")
    xm, ym = x.mean(), y.mean()
    a = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    b = float(ym - a * xm)
    ss_res = float(((y - (a * x + b)) ** 2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return a, b, min(1.0, max(0.0, r2))


def fit_scaling(sweep: Iterable[EnsembleResult], min_points: int = 4) -> ScalingFit:
    points = []
    for res in sweep:
        t3 = res.phase_values("t3")
        if not t3:
            raise InvalidConfiguration("sweep: an ensemble has no terminated replication")
        delta = res.delta0
        if delta <= 0:
            raise InvalidConfiguration("sweep: initial discrepancy must be positive")
        points.append((res.n, delta, scaling_x(res.n, delta), float(statistics.median(t3))))
    if len({(p[0], p[1]) for p in points}) < min_points:
        raise InvalidConfiguration(f"sweep: need at least {min_points} distinct (n, delta) points")
    points.sort()
    a, b, r2 = fit_line([p[2] for p in points], [p[3] for p in points])
    return ScalingFit(a, b, r2, tuple(points))


def selection_coverage_experiment(n: int, steps: int, replications: int, seed: int = 0) -> float:
    """Fraction of runs in which some node is never selected within ``steps`` steps."""
    if n < 2:
        raise InvalidConfiguration("n: need at least 2 nodes")
    missed = 0
    for rep in range(replications):
        if steps == 0:
            missed += 1
            continue
        pairs = PairStream(RngStream(seed, rep), n).take(steps)
        if np.unique(pairs).size < n:
            missed += 1
    return missed / replications


def coupling_experiment(
    initial: LoadVector | Sequence[int], steps: int, seed: int = 0, balance: BalanceFn = balance_pair
) -> bool:
    """Run from l and from -l with every pair order swapped; check l' == -l throughout."""
    loads = list(initial.loads if isinstance(initial, LoadVector) else initial)
    mirror = [-x for x in loads]
    pairs = PairStream(RngStream(seed, 0), len(loads))
    for _ in range(steps):
        u, v = pairs.next_indices()
        loads[u], loads[v] = balance(loads[u], loads[v])
        mirror[v], mirror[u] = balance(mirror[v], mirror[u])
        if any(a != -b for a, b in zip(loads, mirror)):
            return False
    return True
