"""Priority inheritance with backtracking over motion primitives (one horizon per call)."""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

import component_timer
from geometry import MotionGrid, motions_collide

logger = logging.getLogger(__name__)


class ReservationTable:
    """One motion slot per robot (None = unassigned), plus reservation order"""

    def __init__(self, num_robots: int):
        self.slots: List[Optional[object]] = [None] * num_robots
        self.order: List[int] = []

    def __len__(self):
        return len(self.slots)

    def __getitem__(self, robot: int):
        return self.slots[robot]

    def reserve(self, robot: int, motion):
        self.slots[robot] = motion
        self.order.append(robot)

    def release(self, robot: int):
        self.slots[robot] = None
        self.order.remove(robot)

    def reserved(self) -> List[Tuple[int, object]]:
        return [(robot, self.slots[robot]) for robot in self.order]

    def motions(self) -> List[object]:
        return list(self.slots)


def assign_priorities(states: Sequence, goals: Sequence,
                      metric: Union[Callable, Sequence[Callable]]) -> List[int]:
    """Farthest from goal first; equal distances go to the lower id"""
    metrics = metric if isinstance(metric, (list, tuple)) else [metric] * len(states)
    distances = [metrics[i](states[i], goals[i]) for i in range(len(states))]
    return sorted(range(len(states)), key=lambda i: (-distances[i], i))


class DbPibt:
    """
    Recursive reservation of one motion per robot.

    Rollback on failure releases only the failing robot's own slot; reservations made by
    nested frames that succeeded stay. A robot whose frame failed is not entered again in
    the same call, and a later conflict with it counts as failure.
    """

    def __init__(self, margin: float = 0.0, timer: Optional[component_timer.ComponentTimer] = None,
                 grid_cell: float = 1.0):
        self.margin = margin
        self.timer = timer or component_timer.ComponentTimer()
        self.grid_cell = grid_cell
        self.calls = 0
        self.collision_checks = 0
        self._cache: Dict[Tuple[int, int], bool] = {}

    def _collide(self, a, b) -> bool:
        self.collision_checks += 1
        key = (id(a), id(b)) if id(a) < id(b) else (id(b), id(a))
        hit = self._cache.get(key)
        if hit is None:
            hit = motions_collide(a, b, self.margin)
            self._cache[key] = hit
        return hit

    def plan(self, motion_sets: Sequence[Sequence], constraints: Sequence[Tuple[int, object]],
             order: Sequence[int]) -> Optional[ReservationTable]:
        """A complete ReservationTable, or None when no consistent assignment exists under `order`"""
        self._cache = {}
        self._sets = motion_sets
        self._order = list(order)
        self._failed: Set[int] = set()
        table = ReservationTable(len(motion_sets))

        for robot, motion in constraints:
            for _, other in table.reserved():
                if self._collide(motion, other):
                    logger.debug("Constrained motions collide with each other")
                    return None
            table.reserve(robot, motion)

        self._grid = MotionGrid(self.grid_cell)
        for robot, motions in enumerate(motion_sets):
            if table[robot] is None:
                for index, motion in enumerate(motions):
                    self._grid.insert((robot, index), motion.swept, self.margin)

        for robot in self._order:
            if table[robot] is not None:
                continue
            if robot in self._failed or not self._plan_robot(robot, table):
                return None
        return table

    def _blocked_by_planned(self, motion, table: ReservationTable) -> bool:
        with self.timer.section(component_timer.COLLISION_PLANNED):
            return any(self._collide(motion, other) for _, other in table.reserved())

    def _conflicting_unplanned(self, robot: int, motion, table: ReservationTable) -> List[int]:
        """Unplanned robots with at least one candidate colliding with `motion`, in priority order"""
        with self.timer.section(component_timer.COLLISION_UNPLANNED):
            hits: Set[int] = set()
            for j, index in self._grid.query(motion.swept):
                if j == robot or j in hits or table[j] is not None:
                    continue
                if self._collide(motion, self._sets[j][index]):
                    hits.add(j)
        return [j for j in self._order if j in hits]

    def _plan_robot(self, robot: int, table: ReservationTable) -> bool:
        self.calls += 1
        for motion in self._sets[robot]:
            if self._blocked_by_planned(motion, table):
                continue
            table.reserve(robot, motion)
            valid = True
            for j in self._conflicting_unplanned(robot, motion, table):
                if table[j] is not None:
                    continue
                if j in self._failed or not self._plan_robot(j, table):
                    valid = False
                    break
            if valid:
                return True
            table.release(robot)
        self._failed.add(robot)
        return False


class StandaloneStatus(str, Enum):
    SOLVED = "solved"
    STUCK = "stuck"
    HORIZON_LIMIT = "horizon_limit"
    TIMEOUT = "timeout"


@dataclass
class StandaloneResult:
    status: StandaloneStatus
    horizons: List[List[object]] = field(default_factory=list)
    calls: int = 0


def run_standalone(processor, starts: Sequence[np.ndarray], max_horizons: int = 500,
                   timelimit: Optional[float] = None, margin: float = 0.0) -> StandaloneResult:
    """
    Greedy horizon-by-horizon planning with db-PIBT alone.

    `processor` provides process(joint_state) -> motion sets, at_goal(joint_state),
    priorities(joint_state) and timer; priorities are recomputed every horizon.
    """
    planner = DbPibt(margin=margin, timer=processor.timer)
    deadline = time.perf_counter() + timelimit if timelimit is not None else None
    joint = [np.asarray(x, dtype=float) for x in starts]
    result = StandaloneResult(StandaloneStatus.HORIZON_LIMIT)

    for horizon in range(max_horizons + 1):
        if deadline is not None and time.perf_counter() > deadline:
            result.status = StandaloneStatus.TIMEOUT
            break
        if processor.at_goal(joint):
            result.status = StandaloneStatus.SOLVED
            break
        if horizon == max_horizons:
            break
        motion_sets = processor.process(joint)
        table = planner.plan(motion_sets, [], processor.priorities(joint))
        if table is None:
            result.status = StandaloneStatus.STUCK
            break
        result.horizons.append(table.motions())
        joint = [m.final_state for m in table.motions()]

    result.calls = planner.calls
    logger.info(f"Standalone db-PIBT: {result.status.value} after {len(result.horizons)} horizons")
    return result
