"""Command line entry point: ``mallowmatch <subcommand>``.

Exit codes: 0 success, 1 usage error, 2 config validation error,
3 one or more trials failed (records are still written).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .harness import ConfigError, ExperimentConfig, convergence_table, emit, load_records, run, welfare_table
from .mallows import MallowsParams, sample
from .market import MarketConfig, Side, generate, instance_from_json, instance_to_json
from .matching import brute_force_stable, deferred_acceptance, enumerate_stable, matching_to_json

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_TRIALS = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_instance(path: str):
    try:
        return instance_from_json(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read instance {path}: {exc.strerror}") from exc
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad instance file {path}: {exc}") from exc


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_sample(args) -> int:
    params = MallowsParams(args.phi, args.t)
    rng = np.random.default_rng(args.seed)
    lines = [json.dumps(sample(params, rng).ranks.tolist()) for _ in range(args.count)]
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    inst = generate(MarketConfig(args.n, args.k, args.phi_m, args.phi_w, args.seed))
    _write(instance_to_json(inst) + "\n", args.out)
    return EXIT_OK


def cmd_match(args) -> int:
    inst = _read_instance(args.instance)
    side = Side.MEN if args.proposing == "men" else Side.WOMEN
    _write(matching_to_json(deferred_acceptance(inst, side)) + "\n", args.out)
    return EXIT_OK


def cmd_enumerate(args) -> int:
    inst = _read_instance(args.instance)
    if args.brute_force:
        try:
            stable = brute_force_stable(inst)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        stable = enumerate_stable(inst, args.cap)
    doc = {
        "count": len(stable),
        "truncated": stable.truncated,
        "man_optimal": stable.man_optimal,
        "woman_optimal": stable.woman_optimal,
        "matchings": [json.loads(matching_to_json(mu)) for mu in stable.matchings],
    }
    _write(json.dumps(doc) + "\n", args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from exc
    config = ExperimentConfig.from_json(text)
    records = list(run(config, workers=args.workers))
    emit(records, args.format, args.out if args.out else sys.stdout, timing=args.timing)
    failed = [r for r in records if r.error is not None]
    for r in failed[:5]:
        print(f"cell {r.cell} trial {r.trial}: {r.error}", file=sys.stderr)
    return EXIT_TRIALS if failed else EXIT_OK


def _format_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[("" if v is None else f"{v:.6g}" if isinstance(v, float) else str(v)) for v in r.values()] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    try:
        records = load_records(args.records)
    except OSError as exc:
        raise UsageError(f"cannot read records {args.records}: {exc.strerror}") from exc
    if not records:
        raise UsageError("no records to summarize")
    tables = {}
    if args.table in ("welfare", "both"):
        tables["welfare"] = welfare_table(records)
    if args.table in ("convergence", "both"):
        balanced = [r for r in records if r.k == 0]
        if balanced:
            tables["convergence"] = convergence_table(balanced)
        elif args.table == "convergence":
            raise UsageError("convergence table needs balanced (k = 0) cells")
    if args.json:
        _write(json.dumps(tables, indent=2) + "\n", args.out)
    else:
        _write("".join(f"# {name}\n{_format_table(rows)}" for name, rows in tables.items()), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mallowmatch", description="Stable matching under Mallows-correlated preferences.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="draw Mallows permutations (1-based rank vectors, JSON lines)")
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("generate", help="write a random market instance as JSON")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--phi-m", type=float, required=True)
    p.add_argument("--phi-w", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("match", help="deferred acceptance on an instance file")
    p.add_argument("instance")
    p.add_argument("--proposing", choices=("men", "women"), default="men")
    p.add_argument("--out")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("enumerate", help="all stable matchings of an instance file")
    p.add_argument("instance")
    p.add_argument("--cap", type=int, default=10_000)
    p.add_argument("--brute-force", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("experiment", help="run an experiment config file")
    p.add_argument("config")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $MALLOWMATCH_WORKERS or CPU count)")
    p.add_argument("--timing", action="store_true", help="include wall-time column")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="summarize a records file")
    p.add_argument("records")
    p.add_argument("--table", choices=("welfare", "convergence", "both"), default="both")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"mallowmatch: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"mallowmatch: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"mallowmatch: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
