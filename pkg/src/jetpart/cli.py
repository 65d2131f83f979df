"""Command-line front end: ``partition``, ``gen`` and ``profile``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .graph import GraphFormatError, gen_grid, gen_rgg2d, read_metis, write_metis
from .multilevel import JetConfig, partition
from .partition import write_partition
from .profile import ProfileError, default_deltas, performance_profile, read_records, write_profile


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jetpart", description="Multilevel k-way graph partitioning with distributed Jet refinement.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="partition a METIS graph")
    p.add_argument("--graph", required=True, help="METIS graph file")
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--epsilon", type=float, default=0.03)
    p.add_argument("--pes", type=_positive_int, default=None, help="number of simulated PEs")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--refiner", choices=["lp", "jet"], default=None)
    p.add_argument("--jet-rounds", type=_positive_int, default=None, help="temperature rounds t")
    p.add_argument("--alpha", type=float, default=None, help="bucket base for rebalancing")
    p.add_argument("--trigger", type=float, default=None, help="overload reduction below which a probabilistic round runs")
    p.add_argument("--max-rebalance-iterations", type=_positive_int, default=None)
    p.add_argument("--config", help="JSON file with JetConfig fields; flags override it")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override any JetConfig field")
    p.add_argument("--out", help="write the partition here (one 0-based block id per line)")
    p.add_argument("--json", dest="json_out", help="also dump metrics as one JSON object ('-' for stdout)")

    g = sub.add_parser("gen", help="generate a benchmark graph in METIS format")
    g.add_argument("kind", choices=["grid", "rgg2d"])
    g.add_argument("--width", type=_positive_int, help="grid width")
    g.add_argument("--height", type=_positive_int, help="grid height")
    g.add_argument("--n", type=_positive_int, help="rgg2d vertex count")
    g.add_argument("--radius", type=float, help="rgg2d connection radius")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output file (default stdout)")

    pr = sub.add_parser("profile", help="performance profile from a CSV of runs")
    pr.add_argument("csv", help="CSV with header algorithm,graph,k,seed,cut,time_s")
    pr.add_argument("--delta", type=float, action="append", help="delta grid point (repeatable)")
    pr.add_argument("--points", type=_positive_int, default=50, help="grid size when --delta is not given")
    pr.add_argument("--out", help="output CSV (default stdout)")
    return ap


def _format_value(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, list):
        return ",".join(repr(x) for x in v)
    return str(v)


def _config_value(key: str, text: str):
    types = {f.name: f.type for f in fields(JetConfig)}
    if key not in types:
        raise ValueError(f"unknown config key {key!r}")
    kind = {"int": int, "float": float, "str": str}[types[key]]
    return kind(text)


def cmd_partition(args) -> int:
    cfg = JetConfig.load(args.config) if args.config else JetConfig()
    overrides = {
        "pe_count": args.pes,
        "seed": args.seed,
        "refiner": args.refiner,
        "rounds": args.jet_rounds,
        "alpha": args.alpha,
        "trigger": args.trigger,
        "max_rebalance_iterations": args.max_rebalance_iterations,
    }
    for item in args.overrides:
        key, sep, text = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key] = _config_value(key, text)
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    g = read_metis(args.graph)
    result = partition(g, args.k, args.epsilon, cfg)
    metrics = {"n": g.n, "m": g.m, "pes": cfg.pe_count, "seed": cfg.seed, "refiner": cfg.refiner, **result.metrics()}
    for key, value in metrics.items():
        print(f"{key}={_format_value(value)}")
    if args.out:
        write_partition(args.out, result.assignment)
    if args.json_out:
        dump = json.dumps(metrics, sort_keys=True)
        if args.json_out == "-":
            print(dump)
        else:
            Path(args.json_out).write_text(dump + "\n")
    return 0


def cmd_gen(args) -> int:
    if args.kind == "grid":
        if args.width is None or args.height is None:
            raise ValueError("grid needs --width and --height")
        g = gen_grid(args.width, args.height)
    else:
        if args.n is None or args.radius is None:
            raise ValueError("rgg2d needs --n and --radius")
        g = gen_rgg2d(args.n, args.radius, args.seed)
    text = write_metis(g)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_profile(args) -> int:
    records = read_records(Path(args.csv).read_text())
    deltas = args.delta if args.delta else default_deltas(records, args.points)
    text = write_profile(performance_profile(records, deltas), deltas)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"partition": cmd_partition, "gen": cmd_gen, "profile": cmd_profile}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, GraphFormatError, ProfileError, ValueError) as exc:
        print(f"jetpart {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
