"""Seeded end-to-end runs on the generated scenarios; the long ones need --runslow"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.stats import binomtest

from bench_runner import primitive_sets_for
from clustering import ClusterConfig, Selection
from dblacam import SearchStatus, search, solve
from dbpibt import DbPibt
from dynamics import ModelId, make_model
from geometry import CollisionShape, RobotShape, Workspace
from heuristics import HestHeuristic, make_heuristic
from planner_config import PlannerConfig, PrimitiveConfig
from primitives import RolledMotion, generate_primitives
from scenarios import RobotEntry, Scenario, gen_scenarios
from validator import validate

SEEDS = range(10)


def run_seeds(scenario, config):
    psets = primitive_sets_for(scenario, config.primitives)
    outcomes = []
    for seed in SEEDS:
        cfg = config.with_overrides(seed=seed)
        result = solve(scenario, psets, cfg)
        if result.solution is not None:
            report = validate(scenario, result.solution, cfg.delta_g, cfg.margin)
            assert report.ok, f"seed {seed}: {report.summary()}"
        outcomes.append(result)
    return outcomes


@pytest.mark.slow
def test_headon_livelock_is_broken_by_dblacam():
    scenario = gen_scenarios("headon2", {})
    results = run_seeds(scenario, PlannerConfig(timelimit=10.0))
    assert all(r.status == SearchStatus.SOLVED for r in results)


@pytest.mark.slow
def test_headon_standalone_dbpibt_gets_stuck():
    scenario = gen_scenarios("headon2", {})
    results = run_seeds(scenario, PlannerConfig(planner="dbpibt", max_horizons=200, timelimit=10.0))
    assert sum(r.status != SearchStatus.SOLVED for r in results) >= 5


@pytest.mark.slow
@pytest.mark.parametrize("kind,params", [
    ("circle", {"n": 4}),
    ("random2d", {"n": 8, "size": 10.0, "obstacle_density": 0.1}),
])
def test_desk_scale_success_rate(kind, params):
    scenario = gen_scenarios(kind, params, seed=0)
    results = run_seeds(scenario, PlannerConfig(timelimit=60.0))
    assert sum(r.solved for r in results) >= 8


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["alcove", "atgoal", "swap-hetero"])
def test_small_scenarios_are_solved(kind):
    scenario = gen_scenarios(kind, {}, seed=0)
    config = PlannerConfig(timelimit=60.0)
    result = solve(scenario, primitive_sets_for(scenario, config.primitives), config)
    assert result.solved
    assert validate(scenario, result.solution, config.delta_g).ok


MODEL = make_model(ModelId.UNICYCLE_1ST)
SHAPE = RobotShape.for_model(MODEL, CollisionShape.sphere(0.2))


def crowded_sets(robots, motions):
    """Every motion of every robot overlaps every motion of every other robot"""
    sets = []
    for r in range(robots):
        moves = []
        for p in range(motions):
            end = np.array([0.01 * p, 0.01 * r])
            states = np.column_stack([np.linspace([0.0, 0.0], end, 5), np.zeros(5)])
            moves.append(RolledMotion(p, r, states, np.zeros((4, 2)), SHAPE.sweep(states)))
        sets.append(moves)
    return sets


@pytest.mark.parametrize("robots,motions", list(itertools.product([2, 4, 8], [5, 10, 20])))
def test_dbpibt_work_is_quadratic_on_all_conflict_instances(robots, motions):
    planner = DbPibt()
    assert planner.plan(crowded_sets(robots, motions), [], list(range(robots))) is None
    assert planner.calls <= robots
    assert planner.collision_checks <= 2 * robots ** 2 * motions ** 2


@pytest.mark.slow
def test_runtime_grows_with_team_size():
    config = PlannerConfig(timelimit=120.0)
    medians, solved = {}, {}
    for n in (4, 8, 12, 16):
        runtimes, successes = [], 0
        for seed in range(5):
            scenario = gen_scenarios("random2d", {"n": n, "size": 20.0, "obstacle_density": 0.1}, seed=seed)
            result = solve(scenario, primitive_sets_for(scenario, config.primitives), config)
            if result.solved:
                assert validate(scenario, result.solution, config.delta_g).ok
                successes += 1
            runtimes.append(result.runtime)
        medians[n], solved[n] = float(np.median(runtimes)), successes
    assert solved[16] >= 3
    sizes = sorted(medians)
    # a 10% allowance absorbs wall-clock jitter between neighbouring team sizes
    for small, large in zip(sizes, sizes[1:]):
        assert medians[large] >= 0.9 * medians[small], medians


def open_field(robots):
    ws = Workspace(2, np.zeros(2), np.array([20.0, 20.0]))
    entries = [RobotEntry(MODEL, SHAPE, np.array(s, dtype=float), np.array(g, dtype=float)) for s, g in robots]
    return Scenario("open-field", ws, entries).check()


@pytest.mark.slow
def test_hest_table_answers_repeated_queries():
    pset = generate_primitives(MODEL, 100, 10, seed=0)
    goal = np.array([10.0, 10.0, 0.0])
    config = PlannerConfig()
    ws = Workspace(2, np.zeros(2), np.array([20.0, 20.0]))
    heuristic = HestHeuristic(0, MODEL, ws, SHAPE, goal, pset, config)
    rng = np.random.default_rng(7)
    radii, angles = rng.uniform(1.0, 4.0, 40), rng.uniform(-math.pi, math.pi, 40)
    headings = rng.uniform(-math.pi, math.pi, 40)
    stream = [np.array([10.0 + r * math.cos(a), 10.0 + r * math.sin(a), h])
              for r, a, h in zip(radii, angles, headings)]
    for _ in range(2):
        for x in stream:
            heuristic.value(x)
    before = heuristic.snapshot()
    for x in stream:
        heuristic.value(x)
    after = heuristic.snapshot()
    hits = after["table_hits"] - before["table_hits"]
    assert hits / (after["lookups"] - before["lookups"]) > 0.9


@pytest.mark.slow
def test_hest_beats_full_wavefront_precompute():
    scenario = open_field([([3.0, 3.0, 0.0], [6.0, 3.0, 0.0])])
    config = PlannerConfig(primitives=PrimitiveConfig(count=100, horizon=20))
    (pset,) = primitive_sets_for(scenario, config.primitives)
    result = search(scenario, [pset], config)
    assert result.solved

    robot = scenario.robots[0]
    started = time.perf_counter()
    make_heuristic(config.with_overrides(heuristic="reverse-grid-only"), 0, MODEL, scenario.workspace,
                   robot.shape, robot.start, robot.goal, pset)
    grid_precompute = time.perf_counter() - started
    assert result.components["heuristic"] < grid_precompute


@pytest.mark.slow
def test_success_frequency_does_not_drop_with_larger_budgets():
    scenario = gen_scenarios("headon2", {})
    base = PlannerConfig(timelimit=60.0, cluster=ClusterConfig(selection=Selection.WEIGHTED))
    psets = primitive_sets_for(scenario, base.primitives)
    seeds = range(20)
    frequencies = []
    for budget in (100, 1000, 10000):
        results = [solve(scenario, psets, base.with_overrides(seed=s, max_nodes=budget)) for s in seeds]
        for r in results:
            if r.solution is not None:
                assert validate(scenario, r.solution, base.delta_g).ok
        frequencies.append(binomtest(sum(r.solved for r in results), len(seeds)))
    for smaller, larger in zip(frequencies, frequencies[1:]):
        assert larger.k / larger.n >= smaller.proportion_ci(confidence_level=0.95).low
