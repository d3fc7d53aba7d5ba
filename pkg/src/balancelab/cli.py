"""Command-line front end: ``run``, ``ensemble``, ``verify`` and ``fit``.

Exit codes: 0 success, 1 failed check, 2 invalid configuration, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .core import ROUNDING_RULES, InvalidConfiguration
from .distributions import EXPLICIT, KINDS, DistributionSpec, read_explicit
from .harness import EnsembleResult, fit_scaling, run_ensemble
from .oracles import MUTANTS, run_checks
from .simulation import STOP_RULES, TRACE_COLUMNS, ExperimentConfig, run
from .tokens import MODES

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "BALANCELAB_SEED"


class ConfigError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}: expected an integer, got {raw!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file mirroring the flags; flags win")
    p.add_argument("--seed", type=int, default=None, help=f"base seed (default ${SEED_ENV} or 0)")


def _add_experiment(p: argparse.ArgumentParser, trace_default: str) -> None:
    p.add_argument("--n", type=int, help="number of nodes")
    p.add_argument("--dist", choices=KINDS, default="point", help="initial distribution")
    p.add_argument("--m", type=int, help="number of tokens")
    p.add_argument("--d", type=int, help="bimodal offset from the average")
    p.add_argument("--file", help="explicit initial vector, one integer per line")
    p.add_argument("--mode", choices=MODES, help="token overlay mode")
    p.add_argument("--c", type=int, default=10, help="band constant (default 10)")
    p.add_argument("--step-cap", type=int, help="override the default step cap")
    p.add_argument("--trace", default=trace_default, help="full, phases, none or every:K")
    p.add_argument("--stop", choices=STOP_RULES, default="t3", help="stopping rule")
    p.add_argument("--rounding", choices=ROUNDING_RULES, default=ROUNDING_RULES[0])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="balancelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one simulation")
    _add_common(p)
    _add_experiment(p, "full")
    p.add_argument("--token-every", type=int, default=0, help="dump token heights every K steps")
    p.add_argument("--out", default="run", help="output prefix (writes PREFIX.json, PREFIX.csv)")

    p = sub.add_parser("ensemble", help="seeded replications")
    _add_common(p)
    _add_experiment(p, "none")
    p.add_argument("--reps", type=int, default=1, help="replications")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", default="ensemble", help="output prefix (writes PREFIX.json, PREFIX.csv)")

    p = sub.add_parser("verify", help="randomized oracle suite")
    _add_common(p)
    p.add_argument("--checks", help="comma-separated subset of checks")
    p.add_argument("--mutant", choices=sorted(MUTANTS), help=argparse.SUPPRESS)
    p.add_argument("--report", help="write the report as JSON")

    p = sub.add_parser("fit", help="scaling fit over ensemble JSON files")
    _add_common(p)
    p.add_argument("results", nargs="+", help="ensemble JSON files")
    p.add_argument("--out", default="fit.json", help="output JSON path")
    return parser


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config: line {lineno} is not key=value")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = _read_config_file(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(values) - known - {"config"})
        if unknown:
            raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
        values.pop("config", None)
        subparser.set_defaults(**values)
        args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = _default_seed()
    return args


def experiment_config(args: argparse.Namespace, replications: int = 1, token_every: int = 0) -> ExperimentConfig:
    if args.dist == EXPLICIT:
        if not args.file:
            raise InvalidConfiguration("file: --dist explicit needs --file")
        dist = DistributionSpec(EXPLICIT, n=args.n, values=read_explicit(args.file))
    else:
        if args.file:
            raise InvalidConfiguration("file: only valid with --dist explicit")
        if args.n is None:
            raise InvalidConfiguration("n: --n is required")
        if args.m is None:
            raise InvalidConfiguration("m: --m is required")
        dist = DistributionSpec(args.dist, n=args.n, m=args.m, d=args.d)
    return ExperimentConfig(
        distribution=dist,
        seed=args.seed,
        replications=replications,
        mode=args.mode,
        c=args.c,
        step_cap=args.step_cap,
        trace=args.trace,
        stop=args.stop,
        rounding=args.rounding,
        token_dump_every=token_every,
    )


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_run(args: argparse.Namespace) -> int:
    config = experiment_config(args, token_every=args.token_every)
    res = run(config)
    prefix = Path(args.out)
    trace_path = prefix.with_name(prefix.name + ".csv")
    with open(trace_path, "w", newline="") as fh:
        fh.write(f"# seed={config.seed} stream=0 n={res.n} m={res.m}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        w.writerows(res.trace)
    if res.token_dump:
        with open(prefix.with_name(prefix.name + ".tokens.csv"), "w", newline="") as fh:
            fh.write(f"# seed={config.seed} stream=0\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "token", "node", "height"))
            w.writerows(res.token_dump)
    summary = res.summary()
    summary.update(res.phases.as_dict())
    _write_json(prefix.with_name(prefix.name + ".json"), {"config": config.to_dict(), **summary})
    status = "capped" if res.capped else "done"
    print(f"{status}: steps={res.steps} t1={res.phases.t1} t2={res.phases.t2} t3={res.phases.t3}")
    return EXIT_OK


def cmd_ensemble(args: argparse.Namespace) -> int:
    if args.reps < 1:
        raise InvalidConfiguration("reps: must be at least 1")
    config = experiment_config(args, replications=args.reps)
    result = run_ensemble(config, workers=max(1, args.workers))
    prefix = Path(args.out)
    result.write_json(prefix.with_name(prefix.name + ".json"))
    result.write_csv(prefix.with_name(prefix.name + ".csv"))
    s = result.summary()
    print(
        f"replications={s['replications']} cap_hits={s['cap_hits']} "
        f"median t1={s['t1']['median']} t2={s['t2']['median']} t3={s['t3']['median']}"
    )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    names = [x.strip() for x in args.checks.split(",") if x.strip()] if args.checks else None
    kwargs = {"balance": MUTANTS[args.mutant]} if args.mutant else {}
    results = run_checks(args.seed, names, **kwargs)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    if args.report:
        _write_json(
            Path(args.report),
            {
                "seed": args.seed,
                "mutant": args.mutant,
                "passed": ok,
                "checks": [r.__dict__ for r in results],
            },
        )
    return EXIT_OK if ok else EXIT_CHECK


def cmd_fit(args: argparse.Namespace) -> int:
    if len(args.results) < 4:
        raise InvalidConfiguration(f"results: fit needs at least 4 ensemble files, got {len(args.results)}")
    results = []
    for path in args.results:
        try:
            results.append(EnsembleResult.load(path))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise OSError(f"{path}: not an ensemble result ({exc})") from None
    fit = fit_scaling(results)
    payload = fit.to_dict()
    payload["inputs"] = list(args.results)
    _write_json(Path(args.out), payload)
    print(f"slope={fit.slope:.6g} intercept={fit.intercept:.6g} r_squared={fit.r_squared:.6f}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "ensemble": cmd_ensemble, "verify": cmd_verify, "fit": cmd_fit}


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except (InvalidConfiguration, ConfigError) as exc:
        print(f"balancelab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"balancelab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
