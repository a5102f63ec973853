#!/usr/bin/env python3
"""
Command line for the db-LaCAM planner

    python dblacam_cli.py gen-scenarios circle --n 4 --out scenarios/
    python dblacam_cli.py plan scenarios/circle-n4.json --out solution.json
    python dblacam_cli.py validate scenarios/circle-n4.json solution.json
    python dblacam_cli.py bench scenarios/*.json --seeds 0 1 2 --jobs 4 --out bench_out
    python dblacam_cli.py plot bench_out

Exit codes: 0 success, 2 validation failure, 3 only timeouts, 1 anything else.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv

import bench_runner
import export_utils
from dblacam import SearchStatus, solve
from dynamics import ModelId, make_model
from errors import DbLacamError
from planner_config import PlannerConfig, setup_logging
from primitives import generate_primitives, save_set
from scenarios import GENERATORS, gen_scenarios, load_scenario, load_solution, save_solution
from validator import validate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_TIMEOUT = 3


def add_planner_arguments(parser: argparse.ArgumentParser):
    """Planner flags; anything left unset falls back to DBLACAM_* variables, then defaults"""
    group = parser.add_argument_group("planner")
    group.add_argument("--planner", choices=["dblacam", "dbpibt"])
    group.add_argument("--alpha", type=float, help="applicability scale (alpha * delta gate)")
    group.add_argument("--delta", type=float, help="discontinuity bound")
    group.add_argument("--delta-g", type=float, help="goal region radius")
    group.add_argument("--timelimit", type=float, help="wall-clock limit per run (s)")
    group.add_argument("--max-nodes", type=int, help="constraint expansion budget")
    group.add_argument("--heuristic", choices=["hest", "reverse-grid-only"])
    group.add_argument("--lookup-threshold", type=float, help="HEST table lookup radius")
    group.add_argument("--livelock", choices=["on", "off"], help="livelock detection and SC-GOC recovery")
    group.add_argument("--seed", type=int)
    group.add_argument("--margin", type=float, help="extra clearance between robots")
    group.add_argument("--explored-res", type=float, nargs=2, metavar=("LINEAR", "ANGLE"),
                       help="Explored table cell size")
    group.add_argument("--incremental-primitives", action="store_true", default=None)
    group.add_argument("--env-file", help="alternative .env file")

    clustering = parser.add_argument_group("clustering")
    clustering.add_argument("--cluster", choices=["goc", "scgoc", "none"])
    clustering.add_argument("--selection", choices=["vanilla", "det", "deterministic", "weighted"])
    clustering.add_argument("--n", dest="cluster_n", type=int, help="motions taken per cluster")
    clustering.add_argument("--rho", type=float, help="GOC width fraction")
    clustering.add_argument("--tau", type=float, help="SC-GOC cluster radius")

    prims = parser.add_argument_group("primitives")
    prims.add_argument("--primitive-count", type=int)
    prims.add_argument("--horizon", type=int, help="primitive length K")
    prims.add_argument("--primitive-seed", type=int)
    prims.add_argument("--primitive-dir", help="load/save primitive sets here")


def config_from_args(args) -> PlannerConfig:
    overrides = {}
    for name in ("planner", "alpha", "delta", "delta_g", "timelimit", "max_nodes", "heuristic",
                 "lookup_threshold", "seed", "margin", "incremental_primitives"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "livelock", None) is not None:
        overrides["livelock"] = args.livelock == "on"
    if getattr(args, "explored_res", None):
        overrides["explored_res_linear"], overrides["explored_res_angle"] = args.explored_res

    config = PlannerConfig.from_env(getattr(args, "env_file", None), **overrides)

    cluster_changes = {
        field: getattr(args, attr, None)
        for field, attr in (("method", "cluster"), ("selection", "selection"), ("n", "cluster_n"),
                            ("rho", "rho"), ("tau", "tau"))
    }
    cluster_changes = {k: v for k, v in cluster_changes.items() if v is not None}
    primitive_changes = {
        field: getattr(args, attr, None)
        for field, attr in (("count", "primitive_count"), ("horizon", "horizon"), ("seed", "primitive_seed"),
                            ("directory", "primitive_dir"))
    }
    primitive_changes = {k: v for k, v in primitive_changes.items() if v is not None}
    if cluster_changes:
        config = config.with_overrides(cluster=replace(config.cluster, **cluster_changes))
    if primitive_changes:
        config = config.with_overrides(primitives=replace(config.primitives, **primitive_changes))
    return config


def cmd_plan(args) -> int:
    config = config_from_args(args)
    scenario = load_scenario(args.scenario)
    psets = bench_runner.primitive_sets_for(scenario, config.primitives)
    result = solve(scenario, psets, config)
    print(f"{scenario.name}: {result.status.value} in {result.runtime:.2f}s "
          f"({result.expansions} expansions, {result.nodes} nodes)")

    if result.solution is None:
        return EXIT_TIMEOUT if result.status == SearchStatus.TIMEOUT else EXIT_ERROR

    save_solution(result.solution, args.out)
    report = validate(scenario, result.solution, config.delta_g, config.margin)
    print(f"cost {result.solution.cost:.2f}s, {report.summary()}, written to {args.out}")
    if args.svg:
        export_utils.plot_solution(scenario, result.solution, args.svg)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario, check=False)
    solution = load_solution(args.solution)
    report = validate(scenario, solution, args.delta_g, args.margin)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_INVALID


def bench_exit_code(report: bench_runner.RunReport) -> int:
    rows = report.results
    if rows.empty or rows["success"].astype(bool).all():
        return EXIT_OK
    if ((rows["status"] == SearchStatus.SOLVED.value) & ~rows["valid"].astype(bool)).any():
        return EXIT_INVALID
    failed = rows[~rows["success"].astype(bool)]
    if (failed["status"] == SearchStatus.TIMEOUT.value).all():
        return EXIT_TIMEOUT
    return EXIT_ERROR


def cmd_bench(args) -> int:
    config = config_from_args(args)
    seeds = list(range(args.trials)) if args.trials else (args.seeds or [0])
    report = bench_runner.run(args.scenarios, config, seeds, config.timelimit, args.out, args.jobs)
    print(report.summary().to_string(index=False) if len(report) else "no cells were run")
    if args.plots:
        export_utils.emit_plots(report)
    return bench_exit_code(report)


def _parse_params(items: Optional[List[str]]) -> Dict[str, object]:
    params = {}
    for item in items or []:
        key, _, raw = item.partition("=")
        try:
            params[key.replace("-", "_")] = int(raw)
        except ValueError:
            try:
                params[key.replace("-", "_")] = float(raw)
            except ValueError:
                params[key.replace("-", "_")] = raw
    return params


def cmd_gen_scenarios(args) -> int:
    params = _parse_params(args.param)
    if args.n is not None:
        params["n"] = args.n
    for seed in args.seeds or [0]:
        scenario = gen_scenarios(args.kind, params, seed, args.out)
        print(f"{scenario.name}: {len(scenario.robots)} robots, {len(scenario.workspace.obstacles)} obstacles")
    return EXIT_OK


def cmd_gen_primitives(args) -> int:
    model = make_model(args.model, dt=args.dt)
    pset = generate_primitives(model, args.count, args.horizon, seed=args.seed, stay_bins=args.stay_bins)
    path = save_set(pset, args.out)
    summary = pset.summary()
    logger.info(f"Primitive set summary: {summary}")
    print(f"{summary['count']} primitives ({summary['stays']} stays, mean final displacement "
          f"{summary['mean_final_displacement']:.3f}) written to {path}")
    return EXIT_OK


def cmd_plot(args) -> int:
    if args.scenario and args.solution:
        scenario = load_scenario(args.scenario, check=False)
        solution = load_solution(args.solution)
        path = export_utils.plot_solution(scenario, solution, args.out or f"{scenario.name}.svg")
        return EXIT_OK if path is not None else EXIT_ERROR
    if not args.bench_dir:
        logger.error("plot needs a bench directory or --scenario with --solution")
        return EXIT_ERROR
    report = bench_runner.RunReport.from_directory(args.bench_dir)
    outputs = export_utils.emit_plots(report, args.out)
    exporter = export_utils.BenchExporter(args.out or Path(args.bench_dir) / "report")
    summary_path = exporter.export_summary(report)
    print(f"{len(outputs['tables'])} tables, {len(outputs['plots'])} plots, summary in {summary_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="db-LaCAM multi-robot kinodynamic planner")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR (default INFO)")
    parser.add_argument("--log-dir", default=None, help="also write monthly log files here")
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="plan one scenario")
    plan.add_argument("scenario")
    plan.add_argument("--out", default="solution.json")
    plan.add_argument("--svg", help="also write a trajectory plot")
    add_planner_arguments(plan)
    plan.set_defaults(func=cmd_plan)

    check = sub.add_parser("validate", help="check a solution file against its scenario")
    check.add_argument("scenario")
    check.add_argument("solution")
    check.add_argument("--delta-g", type=float)
    check.add_argument("--margin", type=float, default=0.0)
    check.set_defaults(func=cmd_validate)

    bench = sub.add_parser("bench", help="run scenarios x seeds and write results.csv")
    bench.add_argument("scenarios", nargs="*")
    bench.add_argument("--seeds", type=int, nargs="+")
    bench.add_argument("--trials", type=int, help="shorthand for --seeds 0..trials-1")
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--out", default=bench_runner.DEFAULT_OUT_DIR)
    bench.add_argument("--plots", action="store_true", help="emit tables and SVGs after the run")
    add_planner_arguments(bench)
    bench.set_defaults(func=cmd_bench)

    gen = sub.add_parser("gen-scenarios", help="write generated scenario files")
    gen.add_argument("kind", choices=sorted(GENERATORS))
    gen.add_argument("--n", type=int, help="number of robots")
    gen.add_argument("--param", action="append", help="generator parameter key=value, repeatable")
    gen.add_argument("--seeds", type=int, nargs="+")
    gen.add_argument("--out", default="scenarios")
    gen.set_defaults(func=cmd_gen_scenarios)

    prims = sub.add_parser("gen-primitives", help="generate and save a primitive set")
    prims.add_argument("--model", required=True, choices=[m.value for m in ModelId])
    prims.add_argument("--count", type=int, default=300)
    prims.add_argument("--horizon", type=int, default=20)
    prims.add_argument("--dt", type=float, default=0.1)
    prims.add_argument("--seed", type=int, default=0)
    prims.add_argument("--stay-bins", type=int, default=8)
    prims.add_argument("--out", required=True)
    prims.set_defaults(func=cmd_gen_primitives)

    plot = sub.add_parser("plot", help="tables and SVGs of a bench run, or one solution plot")
    plot.add_argument("bench_dir", nargs="?")
    plot.add_argument("--scenario")
    plot.add_argument("--solution")
    plot.add_argument("--out")
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or os.getenv("DBLACAM_LOG_LEVEL", "INFO"), args.log_dir)
    try:
        return args.func(args)
    except DbLacamError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
