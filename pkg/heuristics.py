#!/usr/bin/env python3
"""
Cost-to-go estimation (seconds of control) for each robot

HEST combines a coarse reverse estimate (a wavefront over a workspace grid from the
goal position) with on-demand Guided EST runs under the full dynamics. Results of
successful EST runs are kept in a forward lookup table, so nearby queries are
answered without search.

The grid-only mode answers every query from a full-coverage wavefront.
"""

import heapq
import itertools
import logging
import math
import time
from collections import Counter
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from dynamics import DynamicsModel, distance, distance_many, position_distance
from errors import InvalidGoalError
from geometry import CollisionShape, RobotShape, Workspace, state_free, steps_free
from planner_config import PlannerConfig
from primitives import PrimitiveSet, StateIndex, applicable_motions, rollout_applicable

logger = logging.getLogger(__name__)

UNREACHABLE_COST = 1e6


class HeuristicTable:
    """Append-only nearest-neighbour store of (state, h)"""

    def __init__(self, model: DynamicsModel, kind: str, robot: int = 0, rebuild_threshold: int = 128):
        self.model = model
        self.kind = kind
        self.robot = robot
        self.rebuild_threshold = rebuild_threshold
        self._states: List[np.ndarray] = []
        self._values: List[float] = []
        self._index: Optional[StateIndex] = None
        self._indexed = 0

    def __len__(self):
        return len(self._states)

    def add(self, state, h: float):
        if h < 0:
            raise ValueError(f"heuristic values must be non-negative, got {h}")
        self._states.append(self.model.normalize(state))
        self._values.append(float(h))
        if len(self._states) - self._indexed > self.rebuild_threshold:
            self._rebuild()

    def add_many(self, states: Sequence, values: Sequence[float]):
        for state, h in zip(states, values):
            self._states.append(self.model.normalize(state))
            self._values.append(float(h))
        self._rebuild()

    def _rebuild(self):
        self._index = StateIndex(self.model, range(self.model.state_dim), np.array(self._states))
        self._indexed = len(self._states)

    def nearest(self, x) -> Tuple[float, float]:
        """(distance, h) of the closest entry, (inf, inf) when empty"""
        best = (math.inf, math.inf)
        if self._index is not None and len(self._index):
            i, d = self._index.nearest(x)
            best = (d, self._values[i])
        if len(self._states) > self._indexed:
            pending = np.array(self._states[self._indexed:])
            ds = distance_many(self.model, pending, x)
            j = int(np.argmin(ds))
            if ds[j] < best[0]:
                best = (float(ds[j]), self._values[self._indexed + j])
        return best

    def values(self) -> List[float]:
        return list(self._values)


class ReverseEstimate:
    """
    Wavefront from the goal cell over an 8-connected (26 in 3D) workspace grid.

    Cells are blocked when a sphere of the robot's inscribed radius, shrunk by half a
    cell diagonal, collides; any collision-free robot position therefore lies in a free
    cell. With a `start` and `margin` the wavefront stops once the start is settled and
    the frontier passes (1 + margin) * cost(start); unsettled cells are then bounded
    below by the frontier cost. A passed `deadline` (perf_counter time) stops it the same way.
    """

    def __init__(self, ws: Workspace, shape: RobotShape, model: DynamicsModel, goal,
                 resolution: float = 0.25, delta_g: float = 0.3,
                 start=None, margin: Optional[float] = None, deadline: Optional[float] = None):
        goal = model.normalize(goal)
        if not state_free(ws, shape, goal):
            raise InvalidGoalError(f"goal {np.round(goal, 3).tolist()} is in collision")
        self.ws = ws
        self.model = model
        self.goal = goal
        self.delta_g = delta_g
        self.resolution = resolution
        self.v_max = model.max_speed
        self.dim = ws.dim
        self.grid_shape = tuple(int(v) for v in np.ceil((ws.upper - ws.lower) / resolution))

        cells = np.array(list(np.ndindex(*self.grid_shape)), dtype=float)
        self.centers = ws.lower + (cells + 0.5) * resolution
        inner_radius = max(shape.min_radius - 0.5 * resolution * math.sqrt(self.dim), 1e-3)
        inner = RobotShape(CollisionShape.sphere(inner_radius), tuple(range(self.dim)))
        self.free = steps_free(ws, inner.sweep(self.centers)).reshape(self.grid_shape)

        self.cost = np.full(self.grid_shape, math.inf)
        self.settled = np.zeros(self.grid_shape, dtype=bool)
        self.frontier = math.inf
        self.complete = False
        start_cell = self.cell_of(model.check_state(start)) if start is not None else None
        self._expand(self.cell_of(goal), start_cell, margin, deadline)
        self._table: Optional[HeuristicTable] = None
        logger.debug(f"Reverse estimate: {int(self.settled.sum())} of {self.settled.size} cells settled")

    def cell_of(self, x) -> Tuple[int, ...]:
        pos = np.asarray(x, dtype=float)[list(self.model.position_dims)]
        idx = np.floor((pos - self.ws.lower) / self.resolution).astype(int)
        return tuple(int(v) for v in np.clip(idx, 0, np.array(self.grid_shape) - 1))

    def _expand(self, goal_cell, start_cell, margin, deadline=None):
        moves = [
            (offset, self.resolution * math.sqrt(sum(o * o for o in offset)))
            for offset in itertools.product((-1, 0, 1), repeat=self.dim) if any(offset)
        ]
        self.cost[goal_cell] = 0.0
        heap = [(0.0, goal_cell)]
        stop_cost = None
        while heap:
            c, cell = heapq.heappop(heap)
            if self.settled[cell]:
                continue
            if stop_cost is not None and c > stop_cost:
                self.frontier = c
                return
            if deadline is not None and time.perf_counter() > deadline:
                self.frontier = c
                logger.debug(f"Reverse estimate cut off by the deadline at cost {c:.2f}")
                return
            self.settled[cell] = True
            if cell == start_cell and margin is not None:
                stop_cost = c * (1.0 + margin)
            for offset, step_cost in moves:
                nb = tuple(a + b for a, b in zip(cell, offset))
                if any(v < 0 or v >= n for v, n in zip(nb, self.grid_shape)):
                    continue
                if not self.free[nb] or self.settled[nb]:
                    continue
                nc = c + step_cost
                if nc < self.cost[nb]:
                    self.cost[nb] = nc
                    heapq.heappush(heap, (nc, nb))
        self.complete = True

    def estimate(self, x) -> float:
        """Coarse seconds-to-goal, never below straight-line time"""
        cell = self.cell_of(x)
        if self.settled[cell]:
            grid = self.cost[cell]
        elif self.complete:
            return UNREACHABLE_COST
        else:
            grid = self.frontier
        euclid = position_distance(self.model, x, self.goal)
        return max(grid, euclid) / self.v_max

    @property
    def table(self) -> HeuristicTable:
        """H_r: settled cell centres with the goal's remaining dims"""
        if self._table is None:
            self._table = HeuristicTable(self.model, "reverse")
            states, values = [], []
            flat_settled = self.settled.ravel()
            for center in self.centers[flat_settled]:
                state = self.goal.copy()
                state[list(self.model.position_dims)] = center
                h = 0.0 if distance(self.model, state, self.goal) <= self.delta_g else self.estimate(state)
                states.append(state)
                values.append(h)
            if states:
                self._table.add_many(states, values)
        return self._table


class HestHeuristic:
    """Per-robot HEST: table lookup within Delta, Guided EST otherwise"""
    kind = "hest"

    def __init__(self, robot: int, model: DynamicsModel, ws: Workspace, shape: RobotShape,
                 goal, pset: PrimitiveSet, config: PlannerConfig, start=None,
                 deadline: Optional[float] = None):
        self.robot = robot
        self.model = model
        self.ws = ws
        self.shape = shape
        self.goal = model.normalize(goal)
        self.pset = pset
        self.config = config
        self.v_max = model.max_speed
        self.reverse = ReverseEstimate(ws, shape, model, goal, config.grid_resolution, config.delta_g,
                                       start=start, margin=config.reverse_margin, deadline=deadline)
        self.deadline = deadline
        self.forward = HeuristicTable(model, "forward", robot)
        self.rng = np.random.default_rng([config.seed, robot])
        self.stats: Counter = Counter()

    def _floor(self, x) -> float:
        return position_distance(self.model, x, self.goal) / self.v_max

    def lookup(self, x) -> Tuple[float, float]:
        """Nearest entry of H_r and H combined; equal distances prefer H"""
        d_fwd, h_fwd = self.forward.nearest(x)
        d_rev, h_rev = self.reverse.table.nearest(x)
        if d_fwd <= d_rev:
            return d_fwd, h_fwd
        return d_rev, h_rev

    def value(self, x) -> float:
        self.stats["lookups"] += 1
        if distance(self.model, x, self.goal) <= self.config.delta_g:
            return 0.0
        d, h = self.lookup(x)
        if d <= self.config.lookup_threshold:
            self.stats["table_hits"] += 1
            return max(h, self._floor(x))
        return max(self.est_forward(x), self._floor(x))

    def assign(self, motions) -> List[float]:
        """Set m.h for every motion from its final state"""
        for m in motions:
            m.h = self.value(m.final_state)
        return [m.h for m in motions]

    def est_forward(self, x) -> float:
        """
        Guided EST from x under the full dynamics.

        Stops when a state reaches the goal region or lands within Delta of a forward
        table entry. On success every node on the path is added to the forward table
        with its remaining duration. Budget exhaustion or a passed deadline returns the
        inflated reverse estimate and adds nothing.
        """
        model, cfg = self.model, self.config
        x = model.normalize(x)
        if distance(model, x, self.goal) <= cfg.delta_g:
            return 0.0
        d, h = self.forward.nearest(x)
        if d <= cfg.lookup_threshold:
            self.stats["table_hits"] += 1
            return h

        self.stats["est_calls"] += 1
        budget = cfg.est_budget
        states = np.empty((budget + 1, model.state_dim))
        states[0] = x
        parents = [-1]
        costs = [0.0]
        rev = np.empty(budget + 1)
        rev[0] = self.reverse.estimate(x)
        density = np.zeros(budget + 1)
        n = 1
        dt = model.dt

        end_node, total = None, None
        for _ in range(budget):
            if self.deadline is not None and time.perf_counter() > self.deadline:
                break
            self.stats["est_expansions"] += 1
            weights = 1.0 / (1.0 + density[:n]) / (1.0 + rev[:n])
            i = int(self.rng.choice(n, p=weights / weights.sum()))
            candidates = applicable_motions(self.pset, states[i], cfg.alpha_delta)
            if not candidates:
                continue
            primitive = candidates[int(self.rng.integers(len(candidates)))]
            rolled = rollout_applicable(model, self.ws, self.shape, states[i], [primitive], self.robot)
            if not rolled:
                continue
            seq = rolled[0].states

            reached = np.flatnonzero(distance_many(model, seq[1:], self.goal) <= cfg.delta_g)
            if len(reached):
                k = int(reached[0]) + 1
                end_node = i
                total = costs[i] + k * dt + self._floor(seq[k])
                break

            final = seq[-1]
            d, h = self.forward.nearest(final)
            near = distance_many(model, states[:n], final) <= cfg.est_density_radius
            density[:n][near] += 1
            states[n] = final
            parents.append(i)
            costs.append(costs[i] + len(seq[1:]) * dt)
            rev[n] = self.reverse.estimate(final)
            density[n] = float(np.count_nonzero(near))
            n += 1
            if d <= cfg.lookup_threshold:
                end_node = n - 1
                total = costs[-1] + h
                break

        if end_node is None:
            self.stats["est_failures"] += 1
            fallback = self.reverse.estimate(x) * cfg.est_inflation
            logger.debug(f"Robot {self.robot}: EST budget exhausted, falling back to {fallback:.2f}s")
            return fallback

        node = end_node
        while node >= 0:
            self.forward.add(states[node], total - costs[node])
            node = parents[node]
        return total

    def snapshot(self) -> Dict[str, int]:
        stats = {key: int(self.stats.get(key, 0))
                 for key in ("lookups", "table_hits", "est_calls", "est_expansions", "est_failures")}
        stats["reverse_size"] = len(self.reverse.table)
        stats["forward_size"] = len(self.forward)
        return stats


class GridOnlyHeuristic:
    """Full-coverage wavefront answers every query"""
    kind = "reverse-grid-only"

    def __init__(self, robot: int, model: DynamicsModel, ws: Workspace, shape: RobotShape,
                 goal, config: PlannerConfig, deadline: Optional[float] = None):
        self.robot = robot
        self.model = model
        self.goal = model.normalize(goal)
        self.config = config
        self.reverse = ReverseEstimate(ws, shape, model, goal, config.grid_resolution, config.delta_g,
                                       deadline=deadline)
        self.stats: Counter = Counter()

    def value(self, x) -> float:
        self.stats["lookups"] += 1
        if distance(self.model, x, self.goal) <= self.config.delta_g:
            return 0.0
        return self.reverse.estimate(x)

    def assign(self, motions) -> List[float]:
        for m in motions:
            m.h = self.value(m.final_state)
        return [m.h for m in motions]

    def snapshot(self) -> Dict[str, int]:
        return {"lookups": int(self.stats.get("lookups", 0)), "reverse_cells": int(self.reverse.settled.sum())}


# Convenience functions for easy import
def build_reverse_estimate(ws: Workspace, shape: RobotShape, model: DynamicsModel, goal,
                           resolution: float = 0.25, delta_g: float = 0.3,
                           start=None, margin: Optional[float] = None,
                           deadline: Optional[float] = None) -> ReverseEstimate:
    return ReverseEstimate(ws, shape, model, goal, resolution, delta_g, start=start, margin=margin,
                           deadline=deadline)


def est_forward(heuristic: HestHeuristic, x) -> float:
    return heuristic.est_forward(x)


def hest_assign(heuristic, motions) -> List[float]:
    return heuristic.assign(motions)


def make_heuristic(config: PlannerConfig, robot: int, model: DynamicsModel, ws: Workspace,
                   shape: RobotShape, start, goal, pset: PrimitiveSet, deadline: Optional[float] = None):
    if config.heuristic == "reverse-grid-only":
        return GridOnlyHeuristic(robot, model, ws, shape, goal, config, deadline=deadline)
    return HestHeuristic(robot, model, ws, shape, goal, pset, config, start=start, deadline=deadline)
