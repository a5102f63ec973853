"""db-PIBT reservations, priorities and the standalone loop"""

import numpy as np
from hypothesis import given, settings, strategies as st

from component_timer import ComponentTimer
from dbpibt import DbPibt, ReservationTable, StandaloneStatus, assign_priorities, run_standalone
from dynamics import ModelId, make_model
from geometry import CollisionShape, RobotShape, motions_collide
from primitives import RolledMotion

MODEL = make_model(ModelId.UNICYCLE_1ST)
SHAPE = RobotShape.for_model(MODEL, CollisionShape.sphere(0.2))
K = 10


def straight(robot, start, end, heading=0.0, pid=0):
    xy = np.linspace(start, end, K + 1)
    states = np.column_stack([xy, np.full(K + 1, heading)])
    return RolledMotion(pid, robot, states, np.zeros((K, 2)), SHAPE.sweep(states))


def head_on():
    """Robot 0 drives east, robot 1 west; both forwards meet in the middle"""
    fwd0 = straight(0, [-1.0, 0.0], [-0.1, 0.0], pid=1)
    stay0 = straight(0, [-1.0, 0.0], [-1.0, 0.0], pid=0)
    fwd1 = straight(1, [1.0, 0.0], [0.1, 0.0], heading=3.0, pid=1)
    stay1 = straight(1, [1.0, 0.0], [1.0, 0.0], heading=3.0, pid=0)
    return fwd0, stay0, fwd1, stay1


def distance_1d(a, b):
    return abs(a - b)


def test_priorities_farthest_first():
    assert assign_priorities([2.0, 5.0, 1.0], [0.0, 0.0, 0.0], distance_1d) == [1, 0, 2]


def test_priorities_ties_go_to_lower_id():
    assert assign_priorities([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], distance_1d) == [0, 1, 2]
    assert assign_priorities([1.0, 3.0, 3.0], [0.0, 0.0, 0.0], distance_1d) == [1, 2, 0]


def test_priorities_with_per_robot_metrics():
    metrics = [distance_1d, lambda a, b: 10 * abs(a - b)]
    assert assign_priorities([2.0, 1.0], [0.0, 0.0], metrics) == [1, 0]


def test_reservation_table_bookkeeping():
    table = ReservationTable(3)
    table.reserve(2, "m2")
    table.reserve(0, "m0")
    assert table.reserved() == [(2, "m2"), (0, "m0")]
    assert table.motions() == ["m0", None, "m2"]
    table.release(2)
    assert table[2] is None
    assert table.order == [0]
    assert len(table) == 3


def test_single_robot_takes_first_motion():
    first = straight(0, [0.0, 0.0], [0.5, 0.0])
    second = straight(0, [0.0, 0.0], [0.0, 0.0])
    table = DbPibt().plan([[first, second]], [], [0])
    assert table.motions() == [first]


def test_head_on_low_priority_yields():
    fwd0, stay0, fwd1, stay1 = head_on()
    assert motions_collide(fwd0, fwd1)
    planner = DbPibt()
    table = planner.plan([[fwd0, stay0], [fwd1, stay1]], [], [0, 1])
    assert table.motions() == [fwd0, stay1]
    assert planner.calls == 2


def test_relabelling_robots_permutes_the_result():
    fwd0, stay0, fwd1, stay1 = head_on()
    table = DbPibt().plan([[fwd1, stay1], [fwd0, stay0]], [], [1, 0])
    assert table.motions() == [stay1, fwd0]


def test_constraint_is_respected():
    fwd0, stay0, fwd1, stay1 = head_on()
    table = DbPibt().plan([[fwd0, stay0], [fwd1, stay1]], [(1, fwd1)], [0, 1])
    assert table.motions() == [stay0, fwd1]


def test_failure_when_every_motion_is_blocked_by_a_constraint():
    fwd0, _, fwd1, _ = head_on()
    assert DbPibt().plan([[fwd0], [fwd1]], [(0, fwd0)], [0, 1]) is None


def test_colliding_constraints_fail_immediately():
    fwd0, stay0, fwd1, stay1 = head_on()
    planner = DbPibt()
    assert planner.plan([[fwd0, stay0], [fwd1, stay1]], [(0, fwd0), (1, fwd1)], [0, 1]) is None
    assert planner.calls == 0


def test_conflict_with_only_option_fails():
    fwd0, _, fwd1, _ = head_on()
    assert DbPibt().plan([[fwd0], [fwd1]], [], [0, 1]) is None


def random_sets(seed, robots):
    rng = np.random.default_rng(seed)
    sets = []
    for r in range(robots):
        start = rng.uniform(-2.0, 2.0, size=2)
        sets.append([straight(r, start, start + rng.uniform(-0.8, 0.8, size=2), pid=p)
                     for p in range(int(rng.integers(1, 4)))])
    return sets


@settings(max_examples=150, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=1, max_value=5))
def test_reservations_are_collision_free(seed, robots):
    sets = random_sets(seed, robots)
    order = [int(i) for i in np.random.default_rng(seed).permutation(robots)]
    planner = DbPibt()
    table = planner.plan(sets, [], order)
    assert planner.calls <= robots
    if table is None:
        return
    motions = table.motions()
    assert all(m is not None for m in motions)
    for i in range(robots):
        assert motions[i] in sets[i]
        for j in range(i + 1, robots):
            assert not motions_collide(motions[i], motions[j])


class ConveyorProcessor:
    """Every robot has one motion: 0.5 m east, or the stay once past x=1"""

    def __init__(self):
        self.timer = ComponentTimer()

    def at_goal(self, joint):
        return all(x[0] >= 1.0 for x in joint)

    def priorities(self, joint):
        return list(range(len(joint)))

    def process(self, joint):
        sets = []
        for r, x in enumerate(joint):
            end = x[:2] if x[0] >= 1.0 else x[:2] + np.array([0.5, 0.0])
            sets.append([straight(r, x[:2], end)])
        return sets


def test_standalone_reaches_goals():
    starts = [np.array([0.0, y, 0.0]) for y in (0.0, 1.0)]
    result = run_standalone(ConveyorProcessor(), starts)
    assert result.status == StandaloneStatus.SOLVED
    assert len(result.horizons) == 2
    assert result.horizons[-1][0].final_state[0] == 1.0


def test_standalone_horizon_limit():
    starts = [np.array([0.0, 0.0, 0.0])]
    result = run_standalone(ConveyorProcessor(), starts, max_horizons=1)
    assert result.status == StandaloneStatus.HORIZON_LIMIT
    assert len(result.horizons) == 1


def test_standalone_stuck_when_lanes_overlap():
    starts = [np.array([0.0, 0.0, 0.0]), np.array([0.1, 0.0, 0.0])]
    result = run_standalone(ConveyorProcessor(), starts)
    assert result.status == StandaloneStatus.STUCK
    assert result.horizons == []
