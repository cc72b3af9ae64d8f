"""Command line entry point.

Single run::

    manetsim --config scenario.ini --out run.csv --trace routing

Sweep and comparison::

    manetsim --sweep --seeds 5 --jobs 4 --out sweep.csv --compare aodv:aodv_ext
    manetsim --input sweep.csv --compare aodv:aodv_ext --require "dropped<=-40@40,50"

Exit status: 0 success, 2 configuration error, 3 a ``--require`` check failed.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import PROTOCOLS, ConfigError, ScenarioConfig, load_scenario
from .simulation import TRACE_KINDS, run_single
from .sweep import (DEFAULT_NODE_COUNTS, METRICS, CompareError, SweepResult, SweepSpec,
                    compare, format_deltas, run_sweep)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPARE = 3

_REQUIRE = re.compile(r"^\s*(\w+)\s*(<=|>=)\s*([-+]?[\d.]+(?:[eE][-+]?\d+)?)\s*(?:@\s*([\d,\s]+))?$")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _protocol_list(text: str) -> list[str]:
    out = [x.strip() for x in text.split(",") if x.strip()]
    bad = [p for p in out if p not in PROTOCOLS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"protocols must be drawn from {','.join(PROTOCOLS)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="manetsim",
        description="Discrete-event MANET simulator comparing AODV and density-gated AODV_EXT.",
    )
    ap.add_argument("--config", metavar="PATH", help="scenario file (defaults apply when omitted)")
    ap.add_argument("--sweep", action="store_true", help="run node counts x protocols x seeds")
    ap.add_argument("--seeds", type=int, metavar="K", help="use seeds 1..K (sweep default 5)")
    ap.add_argument("--protocols", type=_protocol_list, metavar="LIST", help="e.g. aodv,aodv_ext")
    ap.add_argument("--nodes", type=_int_list, metavar="LIST", help="node counts, e.g. 10,20,30")
    ap.add_argument("--out", metavar="PATH", help="CSV output (stdout when omitted)")
    ap.add_argument("--trace", action="append", choices=TRACE_KINDS, default=[],
                    help="write a trace next to --out (single runs only); repeatable")
    ap.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel workers for --sweep")
    ap.add_argument("--compare", metavar="BASE:VARIANT", help="print percent deltas between protocols")
    ap.add_argument("--input", metavar="PATH", help="existing sweep CSV to compare instead of running")
    ap.add_argument("--require", action="append", default=[], metavar="EXPR",
                    help="comparison threshold such as 'dropped<=-40@40,50' (percent change); "
                         "exit 3 if any fails")
    return ap


def parse_require(expr: str) -> tuple[str, str, float, Optional[list[int]]]:
    m = _REQUIRE.match(expr)
    if not m:
        raise UsageError(f"bad --require expression {expr!r}")
    metric, op, value, nodes = m.groups()
    if metric not in METRICS:
        raise UsageError(f"--require: unknown metric {metric!r}")
    node_list = [int(x) for x in nodes.split(",") if x.strip()] if nodes else None
    return metric, op, float(value), node_list


def check_requirements(deltas, requirements) -> list[str]:
    """Return a failure message per violated requirement (empty when all hold)."""
    failures = []
    for metric, op, bound, nodes in requirements:
        matched = [d for d in deltas if d.metric == metric and (nodes is None or d.nodes in nodes)]
        if nodes is not None and {d.nodes for d in matched} != set(nodes):
            failures.append(f"{metric}: node counts {nodes} not all present")
            continue
        for d in matched:
            pct = d.percent
            ok = pct is not None and (pct <= bound if op == "<=" else pct >= bound)
            if not ok:
                shown = "NA" if pct is None else f"{pct:+.1f}%"
                failures.append(f"{metric} at {d.nodes} nodes: {shown} fails {op} {bound:+g}%")
    return failures


def _load_config(path: Optional[str]) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        return load_scenario(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _write(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _trace_prefix(out: Optional[str]) -> Path:
    if out is None:
        return Path("manetsim")
    p = Path(out)
    return p.with_suffix("") if p.suffix == ".csv" else p


def _single(args, config: ScenarioConfig) -> int:
    overrides = {}
    if args.nodes:
        if len(args.nodes) != 1:
            raise UsageError("--nodes takes a single value without --sweep")
        overrides["sim__node_count"] = args.nodes[0]
    if args.protocols:
        if len(args.protocols) != 1:
            raise UsageError("--protocols takes a single value without --sweep")
        overrides["sim__protocol"] = args.protocols[0]
    if args.seeds is not None:
        raise UsageError("--seeds needs --sweep; set sim.seed in the config for a single run")
    config = config.with_(**overrides) if overrides else config
    try:
        result = run_single(config, trace_kinds=tuple(dict.fromkeys(args.trace)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spec = SweepSpec((config.sim.node_count,), (config.sim.protocol,), (config.sim.seed,), config)
    table = SweepResult(spec, {(config.sim.node_count, config.sim.protocol, config.sim.seed): result.report})
    _write(table.to_csv(means=False), args.out)
    prefix = _trace_prefix(args.out)
    for kind, body in result.traces.items():
        Path(f"{prefix}.{kind}.tsv").write_text(body, encoding="utf-8")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        requirements = [parse_require(r) for r in args.require]
        if args.require and not args.compare:
            raise UsageError("--require needs --compare")
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        if args.seeds is not None and args.seeds < 1:
            raise UsageError("--seeds must be >= 1")
        if args.input and args.sweep:
            raise UsageError("--input and --sweep are mutually exclusive")
        if args.input and not args.compare:
            raise UsageError("--input is only used with --compare")
        if args.trace and args.sweep:
            raise UsageError("--trace applies to single runs only")
        base = variant = None
        if args.compare:
            base, sep, variant = args.compare.partition(":")
            if not sep or base not in PROTOCOLS or variant not in PROTOCOLS:
                raise UsageError(f"--compare expects BASE:VARIANT from {','.join(PROTOCOLS)}")

        csv_text = None
        if args.input:
            csv_text = Path(args.input).read_text(encoding="utf-8")
        else:
            config = _load_config(args.config)
            if args.sweep:
                spec = SweepSpec(
                    node_counts=args.nodes or DEFAULT_NODE_COUNTS,
                    protocols=args.protocols or PROTOCOLS,
                    seeds=range(1, (args.seeds or 5) + 1),
                    base=config,
                )
                result = run_sweep(spec, jobs=args.jobs)
                csv_text = result.to_csv()
                _write(csv_text, args.out)
                if args.out:
                    Path(_trace_prefix(args.out).as_posix() + ".stddev.csv").write_text(
                        result.stddev_csv(), encoding="utf-8")
            else:
                if args.compare:
                    raise UsageError("--compare needs --sweep or --input")
                return _single(args, config)

        if args.compare:
            deltas = compare(csv_text, base, variant)
            out = sys.stdout if args.out or args.input else sys.stderr
            out.write(format_deltas(deltas, base, variant))
            failures = check_requirements(deltas, requirements)
            for f in failures:
                print(f"FAIL {f}", file=sys.stderr)
            if failures:
                return EXIT_COMPARE
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CompareError as exc:
        print(f"comparison error: {exc}", file=sys.stderr)
        return EXIT_COMPARE
    except (UsageError, ValueError) as exc:
        # bad flag values are configuration errors too
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
