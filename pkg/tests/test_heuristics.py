"""Reverse wavefront, HEST table lookups and Guided EST refinement"""

import math
import time

import numpy as np
import pytest

from errors import InvalidGoalError
from geometry import CollisionShape, Obstacle, RobotShape, Workspace
from heuristics import (
    UNREACHABLE_COST, GridOnlyHeuristic, HestHeuristic, HeuristicTable, build_reverse_estimate, est_forward,
    hest_assign, make_heuristic,
)
from planner_config import PlannerConfig
from primitives import applicable_motions, rollout_applicable

GOAL = np.array([0.0, 0.0, 0.0])


def open_space(obstacles=()):
    return Workspace(2, np.array([-5.0, -5.0]), np.array([5.0, 5.0]), list(obstacles))


def small_robot(model):
    return RobotShape.for_model(model, CollisionShape.sphere(0.1))


def test_reverse_estimate_straight_line_time(unicycle):
    reverse = build_reverse_estimate(open_space(), small_robot(unicycle), unicycle, GOAL)
    assert reverse.estimate([2.0, 0.0, 1.0]) == pytest.approx(4.0, abs=0.5)
    assert reverse.estimate(GOAL) == 0.0


def test_reverse_estimate_goes_around_a_wall(unicycle):
    wall = Obstacle(CollisionShape.box([0.3, 2.0]), np.array([1.0, 0.0]))
    reverse = build_reverse_estimate(open_space([wall]), small_robot(unicycle), unicycle, GOAL)
    assert reverse.estimate([2.0, 0.0, 0.0]) > 2.0 / unicycle.max_speed + 0.5


def test_reverse_estimate_sealed_region_is_unreachable(unicycle):
    wall = Obstacle(CollisionShape.box([0.3, 6.0]), np.array([1.0, 0.0]))
    reverse = build_reverse_estimate(open_space([wall]), small_robot(unicycle), unicycle, GOAL)
    assert reverse.complete
    assert reverse.estimate([3.0, 0.0, 0.0]) == UNREACHABLE_COST
    assert reverse.estimate([-1.0, 0.0, 0.0]) < UNREACHABLE_COST


def test_reverse_estimate_goal_in_collision(unicycle):
    block = Obstacle(CollisionShape.sphere(0.5), np.array([0.0, 0.0]))
    with pytest.raises(InvalidGoalError):
        build_reverse_estimate(open_space([block]), small_robot(unicycle), unicycle, GOAL)


def test_truncated_wavefront_keeps_start_value(unicycle):
    ws, shape = open_space(), small_robot(unicycle)
    start = np.array([1.5, 1.0, 0.0])
    full = build_reverse_estimate(ws, shape, unicycle, GOAL)
    truncated = build_reverse_estimate(ws, shape, unicycle, GOAL, start=start, margin=0.5)
    assert not truncated.complete
    assert truncated.estimate(start) == full.estimate(start)
    far = np.array([-4.5, -4.5, 0.0])
    assert truncated.estimate(far) >= math.hypot(4.5, 4.5) / unicycle.max_speed
    assert truncated.estimate(far) < UNREACHABLE_COST


def test_passed_deadline_stops_wavefront(unicycle):
    reverse = build_reverse_estimate(open_space(), small_robot(unicycle), unicycle, GOAL,
                                     deadline=time.perf_counter() - 1.0)
    assert not reverse.complete
    assert int(reverse.settled.sum()) == 0
    assert len(reverse.table) == 0
    x = np.array([3.0, 4.0, 0.0])
    assert reverse.estimate(x) == pytest.approx(5.0 / unicycle.max_speed)


def test_reverse_table_is_zero_near_goal(unicycle):
    reverse = build_reverse_estimate(open_space(), small_robot(unicycle), unicycle, GOAL)
    table = reverse.table
    assert len(table) == int(reverse.settled.sum())
    assert min(table.values()) == 0.0
    assert all(h >= 0.0 for h in table.values())


def test_estimates_never_undercut_straight_line_time(unicycle):
    reverse = build_reverse_estimate(open_space(), small_robot(unicycle), unicycle, GOAL)
    rng = np.random.default_rng(11)
    for x in rng.uniform(-4.5, 4.5, size=(50, 3)):
        assert reverse.estimate(x) >= math.hypot(x[0], x[1]) / unicycle.max_speed - 1e-12


def test_heuristic_table_nearest(unicycle):
    table = HeuristicTable(unicycle, "forward", rebuild_threshold=4)
    assert table.nearest(GOAL) == (math.inf, math.inf)
    rng = np.random.default_rng(5)
    states = rng.uniform(-3.0, 3.0, size=(10, 3))
    for i, x in enumerate(states):
        table.add(x, float(i))
    assert len(table) == 10
    query = np.array([0.2, -0.4, 2.0])
    brute = [np.hypot(*(x[:2] - query[:2])) + 0.5 * abs(math.remainder(x[2] - query[2], 2 * math.pi))
             for x in states]
    d, h = table.nearest(query)
    assert d == pytest.approx(min(brute))
    assert h == float(int(np.argmin(brute)))


def test_heuristic_table_rejects_negative_values(unicycle):
    with pytest.raises(ValueError):
        HeuristicTable(unicycle, "forward").add(GOAL, -1.0)


def hest(model, pset, **overrides):
    config = PlannerConfig(est_budget=300, **overrides)
    return HestHeuristic(0, model, open_space(), small_robot(model), GOAL, pset, config)


def test_goal_region_is_zero_without_search(unicycle_set):
    heuristic = hest(unicycle_set.model, unicycle_set)
    assert heuristic.value([0.1, 0.05, 0.1]) == 0.0
    assert est_forward(heuristic, [0.1, 0.0, 0.0]) == 0.0
    assert heuristic.snapshot()["est_calls"] == 0


def test_forward_table_hit_is_served_without_search(unicycle_set):
    heuristic = hest(unicycle_set.model, unicycle_set)
    x = np.array([1.0, 0.0, 0.0])
    heuristic.forward.add(x, 3.2)
    assert heuristic.value(x) == 3.2
    stats = heuristic.snapshot()
    assert stats["table_hits"] == 1
    assert stats["est_calls"] == 0


def test_lookup_miss_runs_est(unicycle_set):
    heuristic = hest(unicycle_set.model, unicycle_set)
    # the reverse table carries the goal heading, so a reversed heading is beyond Delta
    x = np.array([1.0, 0.0, math.pi - 0.1])
    d, _ = heuristic.lookup(x)
    assert d > heuristic.config.lookup_threshold
    h = heuristic.value(x)
    assert heuristic.snapshot()["est_calls"] == 1
    assert h >= 1.0 / unicycle_set.model.max_speed


def test_est_budget_exhaustion_falls_back(unicycle_set):
    heuristic = hest(unicycle_set.model, unicycle_set)
    heuristic.config = heuristic.config.with_overrides(est_budget=1)
    x = np.array([3.0, 0.0, math.pi - 0.1])
    expected = heuristic.reverse.estimate(x) * heuristic.config.est_inflation
    assert heuristic.est_forward(x) == pytest.approx(expected)
    stats = heuristic.snapshot()
    assert stats["est_failures"] == 1
    assert stats["forward_size"] == 0


def test_same_seed_same_values(unicycle_set):
    queries = [np.array([1.0, 0.5, math.pi - 0.2]), np.array([-1.5, 1.0, 2.5]), np.array([0.5, -2.0, -2.0])]
    first = hest(unicycle_set.model, unicycle_set, seed=4)
    second = hest(unicycle_set.model, unicycle_set, seed=4)
    assert [first.value(q) for q in queries] == [second.value(q) for q in queries]


def test_forward_table_only_grows(unicycle_set):
    heuristic = hest(unicycle_set.model, unicycle_set)
    sizes = []
    for q in ([1.0, 0.5, math.pi - 0.2], [-1.5, 1.0, 2.5], [1.0, 0.5, math.pi - 0.2]):
        heuristic.value(np.array(q))
        sizes.append(len(heuristic.forward))
    assert sizes == sorted(sizes)


def test_hest_assign_sets_motion_costs(unicycle_set):
    model = unicycle_set.model
    heuristic = hest(model, unicycle_set)
    x = np.array([0.05, 0.0, 0.0])
    stays = [p for p in applicable_motions(unicycle_set, x, 0.05) if p.is_stay]
    motions = rollout_applicable(model, heuristic.ws, heuristic.shape, x, stays)
    assert motions
    assert hest_assign(heuristic, motions) == [0.0] * len(motions)
    assert all(m.h == 0.0 for m in motions)


def test_grid_only_mode(unicycle):
    config = PlannerConfig(heuristic="reverse-grid-only")
    heuristic = make_heuristic(config, 0, unicycle, open_space(), small_robot(unicycle),
                               [2.0, 0.0, 0.0], GOAL, None)
    assert isinstance(heuristic, GridOnlyHeuristic)
    assert heuristic.value(GOAL) == 0.0
    assert heuristic.value([2.0, 0.0, 0.0]) == pytest.approx(4.0, abs=0.5)
    assert heuristic.snapshot()["lookups"] == 2


def test_make_heuristic_defaults_to_hest(unicycle_set):
    model = unicycle_set.model
    heuristic = make_heuristic(PlannerConfig(), 1, model, open_space(), small_robot(model),
                               [2.0, 0.0, 0.0], GOAL, unicycle_set)
    assert isinstance(heuristic, HestHeuristic)
    assert heuristic.robot == 1


def test_passed_deadline_skips_est_expansions(unicycle_set):
    heuristic = hest(unicycle_set.model, unicycle_set)
    heuristic.deadline = time.perf_counter() - 1.0
    x = np.array([3.0, 0.0, math.pi - 0.1])
    expected = heuristic.reverse.estimate(x) * heuristic.config.est_inflation
    assert heuristic.est_forward(x) == pytest.approx(expected)
    stats = heuristic.snapshot()
    assert (stats["est_expansions"], stats["est_failures"], stats["forward_size"]) == (0, 1, 0)
