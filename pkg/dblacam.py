#!/usr/bin/env python3
"""
db-LaCAM high-level search

Depth-first lazy search over joint configurations. Each high-level node carries a FIFO
queue of constraints (forced motions for a prefix of the priority order) that is
expanded one element per visit; db-PIBT fills in the unconstrained robots.
"""

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from functools import partial
from typing import Deque, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

import component_timer
from clustering import ClusterMethod, Selection, cluster_motions
from dbpibt import DbPibt, StandaloneStatus, assign_priorities, run_standalone
from dynamics import DynamicsModel, ModelId, distance, distance_many
from errors import InvalidGoalError
from heuristics import make_heuristic
from planner_config import PlannerConfig
from primitives import PrimitiveSet, RolledMotion, applicable_motions, generate_primitives, rollout_applicable
from scenarios import RobotTrajectory, Scenario, Solution

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class SearchStatus(str, Enum):
    SOLVED = "solved"
    NO_SOLUTION = "no_solution"
    TIMEOUT = "timeout"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(eq=False)
class ConstraintNode:
    parent: Optional["ConstraintNode"] = None
    who: Optional[int] = None
    where: Optional[np.ndarray] = None
    motion: Optional[RolledMotion] = None
    depth: int = 0

    def constraints(self) -> List[Tuple[int, RolledMotion]]:
        """(robot, motion) pairs along the ancestor chain, root first"""
        chain = []
        node = self
        while node is not None and node.who is not None:
            chain.append((node.who, node.motion))
            node = node.parent
        return list(reversed(chain))


@dataclass(eq=False)
class HighLevelNode:
    state: List[np.ndarray]
    tree: Deque[ConstraintNode] = field(default_factory=lambda: deque([ConstraintNode()]))
    motions: Optional[List[RolledMotion]] = None
    parent: Optional["HighLevelNode"] = None
    order: Optional[List[int]] = None
    h_trace: List[float] = field(default_factory=list)
    flagged: FrozenSet[int] = frozenset()
    rolled: Optional[List[List[RolledMotion]]] = None
    ordered: Optional[List[List[RolledMotion]]] = None


@dataclass
class SearchResult:
    status: SearchStatus
    solution: Optional[Solution] = None
    expansions: int = 0
    nodes: int = 0
    runtime: float = 0.0
    components: Dict[str, float] = field(default_factory=dict)
    heuristic_stats: List[Dict[str, int]] = field(default_factory=list)
    livelock_flags: int = 0
    detail: str = ""
    goal_invalid: bool = False

    @property
    def solved(self) -> bool:
        return self.status == SearchStatus.SOLVED


def explored_key(joint: Sequence[np.ndarray], models: Sequence[DynamicsModel],
                 res_linear: float, res_angle: float) -> Tuple[int, ...]:
    """Grid cell of a joint state; angle cells are centred on multiples of res_angle"""
    bins = max(int(round(TWO_PI / res_angle)), 1)
    key: List[int] = []
    for x, model in zip(joint, models):
        for i, value in enumerate(np.asarray(x, dtype=float).tolist()):
            if i in model.angle_dims:
                key.append(int(round(value / res_angle)) % bins)
            else:
                key.append(int(math.floor(value / res_linear)))
    return tuple(key)


def _alternates(deltas: Sequence[float], count: int) -> bool:
    run = 0
    for a, b in zip(deltas, deltas[1:]):
        if a != 0 and b != 0 and (a > 0) != (b > 0):
            run = 2 if run == 0 else run + 1
        else:
            run = 0
        if run >= count:
            return True
    return count <= 1 and any(d != 0 for d in deltas)


def livelock_step(node: HighLevelNode, window: int = 5, alternations: int = 3) -> FrozenSet[int]:
    """Robots whose h over the last `window` nodes alternates in sign `alternations` times in a row"""
    traces = []
    current = node
    while current is not None and len(traces) < window:
        if current.h_trace:
            traces.append(current.h_trace)
        current = current.parent
    traces.reverse()
    if len(traces) < alternations + 1:
        return frozenset()
    flagged = set()
    for robot in range(len(traces[-1])):
        history = [t[robot] for t in traces]
        deltas = [b - a for a, b in zip(history, history[1:])]
        if _alternates(deltas, alternations):
            flagged.add(robot)
    return frozenset(flagged)


def set_constraint_tree(node: HighLevelNode, motion_sets: Sequence[Sequence[RolledMotion]],
                        constraint: ConstraintNode):
    """Push one child constraint per valid motion of the next robot in priority order"""
    if constraint.depth >= len(node.state):
        return
    robot = node.order[constraint.depth]
    for motion in motion_sets[robot]:
        node.tree.append(ConstraintNode(constraint, robot, motion.final_state, motion, constraint.depth + 1))


def assemble_solution(scenario: Scenario, tables: Sequence[Sequence[RolledMotion]], delta_g: float) -> Solution:
    """Concatenate per-horizon motions; trailing exactly-constant states are trimmed"""
    trajectories = []
    for i, robot in enumerate(scenario.robots):
        model = robot.model
        states = [robot.start[None, :]]
        controls = [np.zeros((0, model.control_dim))]
        for table in tables:
            states.append(table[i].states[1:])
            controls.append(table[i].controls)
        states = np.concatenate(states)
        controls = np.concatenate(controls)

        end = len(states) - 1
        while end > 0 and np.array_equal(states[end], states[end - 1]):
            end -= 1
        states, controls = states[:end + 1], controls[:end]

        outside = np.flatnonzero(distance_many(model, states, robot.goal) > delta_g)
        K = int(outside[-1]) + 1 if len(outside) else 0
        trajectories.append(RobotTrajectory(states, controls, K, model.dt))
    return Solution(scenario.name, trajectories)


def backtrack(node: HighLevelNode, scenario: Scenario, delta_g: float) -> Solution:
    """Solution from the root to `node`; cost counts steps until each robot stays inside delta_g"""
    tables = []
    current = node
    while current is not None and current.motions is not None:
        tables.append(current.motions)
        current = current.parent
    return assemble_solution(scenario, list(reversed(tables)), delta_g)


class MotionProcessor:
    """applicable -> rollout -> heuristic -> clustering for every robot of a joint state"""

    def __init__(self, scenario: Scenario, primitive_sets: Sequence[PrimitiveSet], heuristics: Sequence,
                 config: PlannerConfig, timer: component_timer.ComponentTimer):
        self.scenario = scenario
        self.primitive_sets = primitive_sets
        self.heuristics = heuristics
        self.config = config
        self.timer = timer
        seed = config.cluster.seed if config.cluster.seed is not None else config.seed
        self.rng = np.random.default_rng(seed)
        self.models = [r.model for r in scenario.robots]
        self._metrics = [partial(distance_many, m) for m in self.models]

    def rollout(self, joint: Sequence[np.ndarray]) -> List[List[RolledMotion]]:
        cfg = self.config
        out = []
        for i, robot in enumerate(self.scenario.robots):
            candidates = applicable_motions(self.primitive_sets[i], joint[i], cfg.alpha_delta)
            rolled = rollout_applicable(robot.model, self.scenario.workspace, robot.shape, joint[i],
                                        candidates, i, self.timer)
            with self.timer.section(component_timer.HEURISTIC):
                self.heuristics[i].assign(rolled)
            out.append(rolled)
        return out

    def cluster(self, rolled: Sequence[Sequence[RolledMotion]], flagged: FrozenSet[int] = frozenset()):
        cfg = self.config.cluster
        out = []
        with self.timer.section(component_timer.CLUSTERING):
            for i, motions in enumerate(rolled):
                method = ClusterMethod.SCGOC if i in flagged else cfg.method
                out.append(cluster_motions(motions, cfg, self._metrics[i], self.rng,
                                           rho=cfg.rho_for(self.models[i].model_id), method=method))
        return out

    def process(self, joint: Sequence[np.ndarray], flagged: FrozenSet[int] = frozenset()):
        return self.cluster(self.rollout(joint), flagged)

    def process_node(self, node: HighLevelNode) -> List[List[RolledMotion]]:
        """Rollouts and h are computed once per node; weighted selection re-samples each visit"""
        if node.rolled is None:
            node.rolled = self.rollout(node.state)
        if node.ordered is None or self.config.cluster.selection == Selection.WEIGHTED:
            node.ordered = self.cluster(node.rolled, node.flagged)
        return node.ordered

    def at_goal(self, joint: Sequence[np.ndarray]) -> bool:
        return all(distance(m, x, r.goal) <= self.config.delta_g
                   for m, x, r in zip(self.models, joint, self.scenario.robots))

    def priorities(self, joint: Sequence[np.ndarray]) -> List[int]:
        metrics = [partial(distance, m) for m in self.models]
        return assign_priorities(joint, self.scenario.goals, metrics)

    def heuristic_values(self, joint: Sequence[np.ndarray]) -> List[float]:
        return [h.value(x) for h, x in zip(self.heuristics, joint)]


def _sets_per_robot(scenario: Scenario, primitive_sets) -> List[PrimitiveSet]:
    if isinstance(primitive_sets, Mapping):
        out = []
        for robot in scenario.robots:
            key = robot.model.model_id
            pset = primitive_sets.get(key, primitive_sets.get(getattr(key, "value", key)))
            if pset is None:
                raise KeyError(f"no primitive set for model {key.value}")
            out.append(pset)
        return out
    return list(primitive_sets)


def _finish(result: SearchResult, started: float, timer, heuristics, config: PlannerConfig) -> SearchResult:
    result.runtime = time.perf_counter() - started
    result.components = timer.as_dict()
    result.heuristic_stats = [h.snapshot() for h in heuristics]
    if result.solution is not None:
        result.solution.metadata.update({
            "planner": config.planner,
            "status": result.status.value,
            "seed": config.seed,
            "config": config.to_metadata(),
            "expansions": result.expansions,
            "nodes": result.nodes,
            "heuristics": result.heuristic_stats,
            "runtime": result.runtime,
            "components": result.components,
            "timestamp": datetime.now().isoformat(),
        })
    return result


def _timed_out(scenario: Scenario, started: float, timer, heuristics, config: PlannerConfig) -> SearchResult:
    logger.info(f"Search {scenario.name}: deadline passed before the first expansion")
    return _finish(SearchResult(SearchStatus.TIMEOUT, detail="deadline passed"), started, timer, heuristics, config)


def _build_heuristics(scenario: Scenario, psets: Sequence[PrimitiveSet], config: PlannerConfig, timer,
                      deadline: Optional[float] = None):
    with timer.section(component_timer.HEURISTIC):
        return [
            make_heuristic(config, i, r.model, scenario.workspace, r.shape, r.start, r.goal, psets[i],
                           deadline=deadline)
            for i, r in enumerate(scenario.robots)
        ]


def search(scenario: Scenario, primitive_sets, config: PlannerConfig,
           deadline: Optional[float] = None) -> SearchResult:
    """
    Run db-LaCAM on a scenario.

    `primitive_sets` is a list per robot or a mapping model id -> set. `deadline` is an
    absolute perf_counter time overriding config.timelimit.
    """
    started = time.perf_counter()
    if deadline is None:
        deadline = started + config.timelimit
    timer = component_timer.ComponentTimer()
    psets = _sets_per_robot(scenario, primitive_sets)
    models = [r.model for r in scenario.robots]

    if time.perf_counter() > deadline:
        return _timed_out(scenario, started, timer, [], config)
    try:
        heuristics = _build_heuristics(scenario, psets, config, timer, deadline)
    except InvalidGoalError as e:
        logger.error(f"{scenario.name}: {e}")
        result = SearchResult(SearchStatus.NO_SOLUTION, detail=str(e), goal_invalid=True)
        result.runtime = time.perf_counter() - started
        result.components = timer.as_dict()
        return result

    if time.perf_counter() > deadline:
        return _timed_out(scenario, started, timer, heuristics, config)
    processor = MotionProcessor(scenario, psets, heuristics, config, timer)
    pibt = DbPibt(margin=config.margin, timer=timer)
    starts = [m.normalize(x) for m, x in zip(models, scenario.starts)]
    root = HighLevelNode(state=starts, h_trace=processor.heuristic_values(starts))

    def key_of(joint):
        return explored_key(joint, models, config.linear_resolution, config.explored_res_angle)

    open_list: List[HighLevelNode] = [root]
    explored: Dict[Tuple[int, ...], HighLevelNode] = {key_of(starts): root}
    result = SearchResult(SearchStatus.NO_SOLUTION, nodes=1)
    logger.info(f"Search {scenario.name}: {len(scenario.robots)} robots, planner=dblacam, seed={config.seed}")

    while open_list:
        node = open_list[-1]
        if time.perf_counter() > deadline:
            result.status = SearchStatus.TIMEOUT
            break
        if processor.at_goal(node.state):
            result.status = SearchStatus.SOLVED
            result.solution = backtrack(node, scenario, config.delta_g)
            break
        if config.max_nodes is not None and result.expansions >= config.max_nodes:
            result.status = SearchStatus.BUDGET_EXHAUSTED
            break
        if not node.tree:
            open_list.pop()
            continue

        constraint = node.tree.popleft()
        result.expansions += 1
        motion_sets = processor.process_node(node)
        if node.order is None:
            node.order = processor.priorities(node.state)
        set_constraint_tree(node, motion_sets, constraint)

        table = pibt.plan(motion_sets, constraint.constraints(), node.order)
        if table is None:
            continue
        motions = table.motions()
        joint = [m.final_state for m in motions]
        key = key_of(joint)
        if key in explored:
            continue

        child = HighLevelNode(state=joint, motions=motions, parent=node,
                              h_trace=[m.h for m in motions], flagged=node.flagged)
        if config.livelock:
            newly = livelock_step(child, config.livelock_window, config.livelock_alternations)
            if newly - child.flagged:
                result.livelock_flags += len(newly - child.flagged)
                logger.debug(f"Livelock suspected for robots {sorted(newly - child.flagged)}; switching to SC-GOC")
            child.flagged = child.flagged | newly
        open_list.append(child)
        explored[key] = child
        result.nodes += 1

    logger.info(f"Search {scenario.name}: {result.status.value} after {result.expansions} expansions, "
                f"{result.nodes} nodes")
    return _finish(result, started, timer, heuristics, config)


def search_incremental(scenario: Scenario, primitive_sets, config: PlannerConfig) -> SearchResult:
    """Restart the search with more primitives appended after each unsuccessful round"""
    started = time.perf_counter()
    deadline = started + config.timelimit
    psets = _sets_per_robot(scenario, primitive_sets)
    result = SearchResult(SearchStatus.NO_SOLUTION)
    for round_index in range(config.incremental_rounds):
        result = search(scenario, psets, config, deadline=deadline)
        if result.status in (SearchStatus.SOLVED, SearchStatus.TIMEOUT) or result.goal_invalid:
            break
        grown: Dict[ModelId, PrimitiveSet] = {}
        for pset in psets:
            if pset.model_id not in grown:
                grown[pset.model_id] = generate_primitives(
                    pset.model, config.incremental_step, pset.horizon,
                    seed=config.primitives.seed + round_index + 1, existing=pset,
                )
        psets = [grown[p.model_id] for p in psets]
        logger.warning(f"Incremental restart {round_index + 1}: "
                       f"{', '.join(f'{k.value}={len(v)}' for k, v in grown.items())} primitives")
    result.runtime = time.perf_counter() - started
    if result.solution is not None:
        result.solution.metadata["runtime"] = result.runtime
    return result


def search_standalone(scenario: Scenario, primitive_sets, config: PlannerConfig) -> SearchResult:
    """db-PIBT horizon by horizon without the high-level search"""
    started = time.perf_counter()
    timer = component_timer.ComponentTimer()
    psets = _sets_per_robot(scenario, primitive_sets)
    deadline = started + config.timelimit
    if time.perf_counter() > deadline:
        return _timed_out(scenario, started, timer, [], config)
    try:
        heuristics = _build_heuristics(scenario, psets, config, timer, deadline)
    except InvalidGoalError as e:
        logger.error(f"{scenario.name}: {e}")
        return SearchResult(SearchStatus.NO_SOLUTION, detail=str(e), goal_invalid=True,
                            runtime=time.perf_counter() - started)

    processor = MotionProcessor(scenario, psets, heuristics, config, timer)
    starts = [r.model.normalize(x) for r, x in zip(scenario.robots, scenario.starts)]
    remaining = max(deadline - time.perf_counter(), 0.0)
    outcome = run_standalone(processor, starts, config.max_horizons, remaining, config.margin)

    statuses = {
        StandaloneStatus.SOLVED: SearchStatus.SOLVED,
        StandaloneStatus.TIMEOUT: SearchStatus.TIMEOUT,
    }
    result = SearchResult(statuses.get(outcome.status, SearchStatus.NO_SOLUTION),
                          expansions=len(outcome.horizons), nodes=len(outcome.horizons),
                          detail=outcome.status.value)
    if result.solved:
        result.solution = assemble_solution(scenario, outcome.horizons, config.delta_g)
        result.solution.metadata["horizons"] = len(outcome.horizons)
    return _finish(result, started, timer, heuristics, config)


# Convenience functions for easy import
def solve(scenario: Scenario, primitive_sets, config: PlannerConfig) -> SearchResult:
    """Dispatch on config.planner / config.incremental_primitives"""
    if config.planner == "dbpibt":
        return search_standalone(scenario, primitive_sets, config)
    if config.incremental_primitives:
        return search_incremental(scenario, primitive_sets, config)
    return search(scenario, primitive_sets, config)
