#!/usr/bin/env python3
"""
Benchmark runner
Runs the planner over (scenario, seed) cells, validates every solution and appends one
row per cell to results.csv as soon as the cell finishes. Wall-clock figures go to a
separate timing.csv so that results.csv is reproducible byte for byte.
"""

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

import component_timer
from dblacam import solve
from planner_config import PlannerConfig, PrimitiveConfig
from primitives import PrimitiveSet, generate_primitives, load_set, save_set
from scenarios import Scenario, load_scenario, save_solution
from validator import validate

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.csv"
TIMING_FILE = "timing.csv"
SOLUTIONS_DIR = "solutions"
DEFAULT_OUT_DIR = "bench_out"

RESULT_COLUMNS = [
    "scenario", "scenario_file", "seed", "planner", "robots", "status", "success", "valid",
    "cost", "expansions", "nodes", "solution_file", "detail",
]
TIMING_COLUMNS = ["scenario", "seed", "planner", "runtime", *component_timer.CATEGORIES, "timestamp"]

# primitive sets are immutable once built; one cache per worker process
_PRIMITIVE_CACHE: Dict[str, PrimitiveSet] = {}


def primitive_file_name(model_id: str, cfg: PrimitiveConfig) -> str:
    return f"{model_id}_n{cfg.count}_K{cfg.horizon}_s{cfg.seed}_b{cfg.stay_bins}.json"


def primitive_sets_for(scenario: Scenario, cfg: PrimitiveConfig) -> List[PrimitiveSet]:
    """One set per robot; robots with identical models share a set"""
    sets = []
    for robot in scenario.robots:
        model = robot.model
        key = json.dumps({"model": model.to_spec(), "count": cfg.count, "K": cfg.horizon, "seed": cfg.seed,
                          "stay_bins": cfg.stay_bins}, sort_keys=True)
        pset = _PRIMITIVE_CACHE.get(key)
        if pset is None:
            path = Path(cfg.directory) / primitive_file_name(model.model_id.value, cfg) if cfg.directory else None
            if path is not None and path.exists():
                pset = load_set(path, model)
                logger.info(f"Loaded {len(pset)} primitives for {model.model_id.value} from {path}")
            else:
                pset = generate_primitives(model, cfg.count, cfg.horizon, seed=cfg.seed, stay_bins=cfg.stay_bins)
                if path is not None:
                    save_set(pset, path)
            _PRIMITIVE_CACHE[key] = pset
        sets.append(pset)
    return sets


@dataclass
class RunReport:
    """results.csv and timing.csv rows of one bench run"""
    results: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=RESULT_COLUMNS))
    timing: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=TIMING_COLUMNS))
    out_dir: Optional[Path] = None

    def __len__(self):
        return len(self.results)

    @property
    def empty(self) -> bool:
        return self.results.empty

    def rows(self) -> pd.DataFrame:
        """Results joined with runtime and component timing"""
        if self.results.empty:
            return pd.DataFrame(columns=RESULT_COLUMNS + TIMING_COLUMNS[3:-1])
        timing = self.timing.drop(columns=["timestamp"], errors="ignore")
        return self.results.merge(timing, on=["scenario", "seed", "planner"], how="left")

    def summary(self) -> pd.DataFrame:
        """Per scenario and planner: runs, successes, failure rate, runtime and cost statistics"""
        columns = ["scenario", "planner", "runs", "successes", "failure_rate",
                   "runtime_mean", "runtime_median", "cost_mean", "cost_median"]
        rows = self.rows()
        if rows.empty:
            return pd.DataFrame(columns=columns)
        rows = rows.assign(success=rows["success"].astype(bool))
        grouped = rows.groupby(["scenario", "planner"], sort=True)
        summary = grouped.agg(
            runs=("seed", "count"),
            successes=("success", "sum"),
            runtime_mean=("runtime", "mean"),
            runtime_median=("runtime", "median"),
            cost_mean=("cost", "mean"),
            cost_median=("cost", "median"),
        ).reset_index()
        summary["failure_rate"] = 1.0 - summary["successes"] / summary["runs"]
        return summary[columns]

    @classmethod
    def from_directory(cls, out_dir) -> "RunReport":
        out_dir = Path(out_dir)
        results_path, timing_path = out_dir / RESULTS_FILE, out_dir / TIMING_FILE
        results = pd.read_csv(results_path) if results_path.exists() else pd.DataFrame(columns=RESULT_COLUMNS)
        timing = pd.read_csv(timing_path) if timing_path.exists() else pd.DataFrame(columns=TIMING_COLUMNS)
        return cls(results, timing, out_dir)


def _failed_rows(scenario_name: str, scenario_file: str, seed: int, planner: str, status: str,
                 detail: str, runtime: float = 0.0) -> Tuple[Dict, Dict]:
    result = {c: None for c in RESULT_COLUMNS}
    result.update({
        "scenario": scenario_name, "scenario_file": scenario_file, "seed": seed, "planner": planner,
        "status": status, "success": False, "valid": False, "detail": detail,
    })
    timing = {"scenario": scenario_name, "seed": seed, "planner": planner, "runtime": runtime,
              "timestamp": datetime.now().isoformat()}
    timing.update({c: 0.0 for c in component_timer.CATEGORIES})
    return result, timing


def run_cell(scenario_file: str, config: PlannerConfig, seed: int, timelimit: float,
             out_dir: Optional[str] = None) -> Tuple[Dict, Dict]:
    """Plan, validate and record one (scenario, seed) cell; never raises"""
    name = Path(scenario_file).stem
    started = time.perf_counter()
    try:
        scenario = load_scenario(scenario_file)
        name = scenario.name
        cfg = config.with_overrides(seed=seed, timelimit=timelimit)
        psets = primitive_sets_for(scenario, cfg.primitives)
        outcome = solve(scenario, psets, cfg)
    except Exception as e:
        logger.error(f"Bench cell {name} seed={seed} failed: {e}")
        return _failed_rows(name, scenario_file, seed, config.planner, "error", str(e),
                            time.perf_counter() - started)

    valid = False
    solution_file = None
    cost = None
    detail = outcome.detail
    if outcome.solution is not None:
        check = validate(scenario, outcome.solution, cfg.delta_g, cfg.margin)
        valid = check.ok
        if valid:
            cost = outcome.solution.cost
        else:
            detail = check.summary()
            logger.error(f"Bench cell {name} seed={seed}: planner solution rejected\n{detail}")
        if out_dir is not None:
            solution_file = f"{SOLUTIONS_DIR}/{Path(scenario_file).stem}_s{seed}.json"
            save_solution(outcome.solution, Path(out_dir) / solution_file, include_volatile=False)

    result = {
        "scenario": name,
        "scenario_file": scenario_file,
        "seed": seed,
        "planner": cfg.planner,
        "robots": len(scenario.robots),
        "status": outcome.status.value,
        "success": bool(outcome.solved and valid),
        "valid": valid,
        "cost": cost,
        "expansions": outcome.expansions,
        "nodes": outcome.nodes,
        "solution_file": solution_file,
        "detail": detail,
    }
    timing = {"scenario": name, "seed": seed, "planner": cfg.planner, "runtime": outcome.runtime,
              "timestamp": datetime.now().isoformat()}
    timing.update({c: outcome.components.get(c, 0.0) for c in component_timer.CATEGORIES})
    logger.info(f"Bench cell {name} seed={seed}: {outcome.status.value} "
                f"in {outcome.runtime:.2f}s" + (f", cost {cost:.2f}" if cost is not None else ""))
    return result, timing


def _append(path: Path, row: Dict, columns: Sequence[str]):
    pd.DataFrame([row], columns=columns).to_csv(path, mode="a", header=False, index=False)


def run(scenario_paths: Sequence, config: PlannerConfig, seeds: Sequence[int], timelimit: float,
        out_dir=DEFAULT_OUT_DIR, jobs: int = 1) -> RunReport:
    """
    Run every (scenario, seed) cell and return the RunReport.

    Rows are appended in cell order as each cell completes, so an interrupted run leaves
    every finished row on disk. With jobs > 1 cells run in worker processes.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path, timing_path = out_dir / RESULTS_FILE, out_dir / TIMING_FILE
    pd.DataFrame(columns=RESULT_COLUMNS).to_csv(results_path, index=False)
    pd.DataFrame(columns=TIMING_COLUMNS).to_csv(timing_path, index=False)

    cells = [(str(path), seed) for path in scenario_paths for seed in seeds]
    logger.info(f"Bench: {len(cells)} cells, planner={config.planner}, timelimit={timelimit}s, jobs={jobs}")

    def record(result: Dict, timing: Dict):
        _append(results_path, result, RESULT_COLUMNS)
        _append(timing_path, timing, TIMING_COLUMNS)

    if jobs <= 1:
        for path, seed in cells:
            record(*run_cell(path, config, seed, timelimit, str(out_dir)))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = [executor.submit(run_cell, path, config, seed, timelimit, str(out_dir))
                       for path, seed in cells]
            for (path, seed), future in zip(cells, futures):
                try:
                    record(*future.result())
                except Exception as e:
                    logger.error(f"Bench worker for {path} seed={seed} died: {e}")
                    record(*_failed_rows(Path(path).stem, path, seed, config.planner, "error", str(e)))

    report = RunReport.from_directory(out_dir)
    successes = int(report.results["success"].astype(bool).sum()) if len(report) else 0
    logger.info(f"Bench finished: {successes}/{len(report)} cells solved, rows in {results_path}")
    return report
