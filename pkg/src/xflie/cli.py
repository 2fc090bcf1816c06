"""Command line entry point: ``xflie run | plan | compare | world``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Sequence

from . import bench, hpp, serialize
from .errors import ConfigError, MissingMetrics, XflieError
from .scene import save_world
from .worlds import generate_world

EXIT_OK, EXIT_ABORTED, EXIT_CONFIG = 0, 2, 3


def _pose(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("pose must be x,y,z")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xflie", description="Layered semantic graph inspection simulator and planner benchmark")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a scenario mission and its query script")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--planner", choices=("lsg", "grid", "both"))
    run.add_argument("--naive-edges", action="store_true", default=None)
    run.add_argument("--similarity-norm", choices=("set", "none"))
    run.add_argument("--out")

    plan = sub.add_parser("plan", help="plan one query over a saved graph")
    plan.add_argument("--graph", required=True)
    plan.add_argument("--pose", required=True, type=_pose)
    plan.add_argument("--query", required=True)
    plan.add_argument("--naive-edges", action="store_true")
    plan.add_argument("--metrics", help="append per-search rows to this csv")
    plan.add_argument("--scenario", default="adhoc", help="scenario id written to the metrics csv")

    cmp_ = sub.add_parser("compare", help="compare lsg and grid planners over scenarios")
    src = cmp_.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenarios", nargs="+", help="scenario files to run with both planners")
    src.add_argument("--runs", nargs="+", help="existing run directories holding metrics.csv")
    cmp_.add_argument("--seed", type=int)
    cmp_.add_argument("--out", required=True)

    world = sub.add_parser("world", help="write a generated world file")
    world.add_argument("--targets", type=int, required=True)
    world.add_argument("--seed", type=int, default=0)
    world.add_argument("--out", required=True)
    return ap


def cmd_run(args: argparse.Namespace) -> int:
    spec = bench.load_scenario(args.scenario)
    spec = bench.apply_overrides(spec, bench.env_overrides())
    spec = bench.apply_overrides(
        spec,
        {
            "seed": args.seed,
            "planner": args.planner,
            "out": args.out,
            "naive_edges": args.naive_edges,
            "similarity_norm": args.similarity_norm,
        },
    )
    if spec.out is None:
        raise ConfigError("no output directory: pass --out or set XFLIE_OUT")
    spec = bench.ScenarioSpec(**{**spec.__dict__})  # re-validate after overrides
    result = bench.run_scenario(spec)
    m = result.mission
    print(f"{spec.name}: inspected {len(m.g.inspected())}, detected {len(m.g.detected())}, queries {len(result.queries)} -> {spec.out}")
    if result.aborted:
        print(f"mission aborted: {result.aborted}", file=sys.stderr)
        return EXIT_ABORTED
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    g = serialize.load(args.graph)
    query = hpp.parse_query(args.query, g)
    res = hpp.plan(g, args.pose, query, args.naive_edges)
    json.dump(hpp.plan_to_dict(res), sys.stdout, indent=1)
    sys.stdout.write("\n")
    if args.metrics:
        path = Path(args.metrics)
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["scenario", "query_id", "layer", "edges_exposed", "plan_time_s", "length_m"])
            for layer, _owner, exposed, dt, length in res.dijkstra_calls():
                w.writerow([args.scenario, str(query), layer, exposed, repr(dt), repr(length)])
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    out = Path(args.out)
    metrics, queries = {}, {}
    if args.scenarios:
        for path in args.scenarios:
            spec = bench.apply_overrides(bench.load_scenario(path), bench.env_overrides())
            spec = bench.apply_overrides(spec, {"seed": args.seed, "planner": "both"})
            result = bench.run_scenario(spec, out / spec.name)
            if result.aborted:
                print(f"{spec.name}: mission aborted: {result.aborted}", file=sys.stderr)
                return EXIT_ABORTED
            metrics[spec.name] = bench.metrics_dicts(result.metrics, spec.name)
            queries[spec.name] = bench.transit_outcomes(result)
    else:
        for d in args.runs:
            rows = bench.read_metrics(Path(d) / "metrics.csv")
            name = rows[0]["scenario"] if rows else Path(d).name
            metrics[name] = rows
            qpath = Path(d) / "queries.csv"
            if qpath.exists():
                with open(qpath, newline="") as fh:
                    queries[name] = [
                        (r["query_id"], r["lsg_ok"] == "1", float(r["lsg_length_m"]), r["grid_ok"] == "1", float(r["grid_length_m"]) if r["grid_length_m"] else None)
                        for r in csv.DictReader(fh)
                    ]
    report = bench.compare_planners(metrics, queries)
    bench.write_report(report, out)
    sys.stdout.write(bench.format_report(report))
    return EXIT_OK


def cmd_world(args: argparse.Namespace) -> int:
    save_world(args.out, generate_world(args.targets, args.seed))
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "plan": cmd_plan, "compare": cmd_compare, "world": cmd_world}
    try:
        return handlers[args.cmd](args)
    except (ConfigError, MissingMetrics, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except XflieError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
