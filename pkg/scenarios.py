#!/usr/bin/env python3
"""
Scenario and solution files plus the scenario generators

Formats are versioned JSON; floats are written with Python's shortest round-trip repr,
so a file replays to the exact same doubles.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from dynamics import DynamicsModel, ModelId, make_model, model_from_spec
from errors import ContractViolation, ScenarioError, SolutionFormatError
from geometry import CollisionShape, Obstacle, RobotShape, Workspace, colliding_steps, state_free

logger = logging.getLogger(__name__)

SCENARIO_VERSION = "dblacam-scenario/1"
SOLUTION_VERSION = "dblacam-solution/1"

DEFAULTS = {"delta": 0.5, "alpha": 1.0, "delta_g": 0.3}

# keys of Solution.metadata that vary between identical runs
VOLATILE_METADATA = ("runtime", "components", "timestamp")


@dataclass(eq=False)
class RobotEntry:
    model: DynamicsModel
    shape: RobotShape
    start: np.ndarray
    goal: np.ndarray

    def to_dict(self) -> Dict:
        return {
            "model": self.model.to_spec(),
            "shape": self.shape.to_dict(),
            "start": [float(v) for v in self.start],
            "goal": [float(v) for v in self.goal],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "RobotEntry":
        model = model_from_spec(data["model"])
        shape = RobotShape.from_dict(data["shape"], model)
        return cls(model, shape, model.normalize(data["start"]), model.normalize(data["goal"]))


@dataclass(eq=False)
class Scenario:
    name: str
    workspace: Workspace
    robots: List[RobotEntry]
    defaults: Dict[str, float] = field(default_factory=lambda: dict(DEFAULTS))

    @property
    def starts(self) -> List[np.ndarray]:
        return [r.start for r in self.robots]

    @property
    def goals(self) -> List[np.ndarray]:
        return [r.goal for r in self.robots]

    def problems(self) -> List[str]:
        """Every violated scenario invariant, empty when the scenario is usable"""
        issues = []
        ws = self.workspace
        for i, robot in enumerate(self.robots):
            if robot.shape.dim != ws.dim:
                issues.append(f"robot {i}: shape dimension differs from workspace")
                continue
            if not state_free(ws, robot.shape, robot.start):
                issues.append(f"robot {i}: start in collision or outside the workspace")
            goal_pos = robot.goal[list(robot.model.position_dims)]
            if np.any(goal_pos < ws.lower) or np.any(goal_pos > ws.upper):
                issues.append(f"robot {i}: goal outside the workspace")
            if robot.model.velocity_dims and np.any(robot.goal[list(robot.model.velocity_dims)] != 0.0):
                issues.append(f"robot {i}: goal velocity must be zero")
            step_length = robot.model.max_speed * robot.model.dt
            if not step_length < robot.shape.min_radius:
                issues.append(
                    f"robot {i}: v_max*dt={step_length:.3f} is not below the shape radius {robot.shape.min_radius:.3f}"
                )
        for i in range(len(self.robots)):
            for j in range(i + 1, len(self.robots)):
                a = self.robots[i].shape.sweep(self.robots[i].start[None, :])
                b = self.robots[j].shape.sweep(self.robots[j].start[None, :])
                if colliding_steps(a, b)[0]:
                    issues.append(f"robots {i} and {j}: starts collide")
        dts = {r.model.dt for r in self.robots}
        if len(dts) > 1:
            issues.append(f"robots use different dt values {sorted(dts)}")
        return issues

    def check(self) -> "Scenario":
        issues = self.problems()
        if issues:
            raise ScenarioError(f"scenario {self.name}: " + "; ".join(issues))
        return self

    def to_dict(self) -> Dict:
        return {
            "version": SCENARIO_VERSION,
            "name": self.name,
            "workspace": self.workspace.to_dict(),
            "robots": [r.to_dict() for r in self.robots],
            "defaults": dict(self.defaults),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Scenario":
        if data.get("version") != SCENARIO_VERSION:
            raise ScenarioError(f"unsupported scenario version {data.get('version')!r}")
        try:
            return cls(
                name=data["name"],
                workspace=Workspace.from_dict(data["workspace"]),
                robots=[RobotEntry.from_dict(r) for r in data["robots"]],
                defaults={**DEFAULTS, **data.get("defaults", {})},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError(f"malformed scenario: {e}")


def save_scenario(scenario: Scenario, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario.to_dict(), f, indent=1)
    return path


def load_scenario(path, check: bool = True) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioError(f"cannot read scenario {path}: {e}")
    scenario = Scenario.from_dict(data)
    return scenario.check() if check else scenario


# --- solutions --------------------------------------------------------------------

@dataclass(eq=False)
class RobotTrajectory:
    """States x_0..x_T, controls u_0..u_{T-1}; K steps count towards the cost"""
    states: np.ndarray
    controls: np.ndarray
    K: int
    dt: float

    @property
    def cost(self) -> float:
        return self.K * self.dt


@dataclass(eq=False)
class Solution:
    scenario: str
    trajectories: List[RobotTrajectory]
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def cost(self) -> float:
        return float(sum(t.cost for t in self.trajectories))

    def to_dict(self, include_volatile: bool = True) -> Dict:
        metadata = dict(self.metadata)
        if not include_volatile:
            for key in VOLATILE_METADATA:
                metadata.pop(key, None)
        return {
            "version": SOLUTION_VERSION,
            "scenario": self.scenario,
            "cost": self.cost,
            "robots": [
                {"states": t.states.tolist(), "controls": t.controls.tolist(), "K": t.K, "dt": t.dt}
                for t in self.trajectories
            ],
            "metadata": metadata,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Solution":
        if data.get("version") != SOLUTION_VERSION:
            raise SolutionFormatError(f"unsupported solution version {data.get('version')!r}")
        try:
            trajectories = []
            for entry in data["robots"]:
                states = np.asarray(entry["states"], dtype=float)
                controls = np.asarray(entry["controls"], dtype=float)
                if states.ndim != 2:
                    raise ValueError("states must be a 2D array")
                controls = controls.reshape(len(states) - 1, -1) if controls.size else np.zeros((0, 0))
                trajectories.append(RobotTrajectory(states, controls, int(entry["K"]), float(entry["dt"])))
            return cls(data["scenario"], trajectories, dict(data.get("metadata", {})))
        except (KeyError, TypeError, ValueError) as e:
            raise SolutionFormatError(f"malformed solution: {e}")


def save_solution(solution: Solution, path, include_volatile: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(solution.to_dict(include_volatile), f, sort_keys=True)
    return path


def load_solution(path) -> Solution:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise SolutionFormatError(f"cannot read solution {path}: {e}")
    return Solution.from_dict(data)


# --- generators -------------------------------------------------------------------

DEFAULT_SHAPES = {
    ModelId.UNICYCLE_1ST: {"body": {"type": "sphere", "radius": 0.2}},
    ModelId.DOUBLE_INTEGRATOR_2D: {"body": {"type": "sphere", "radius": 0.2}},
    ModelId.DOUBLE_INTEGRATOR_3D: {"body": {"type": "sphere", "radius": 0.15}},
    ModelId.CAR_WITH_TRAILER: {
        "body": {"type": "box", "half_extents": [0.2, 0.1]},
        "trailer": {"type": "box", "half_extents": [0.15, 0.1]},
    },
}


def _robot(model_id: ModelId, position: Sequence[float], heading: float, goal_position: Sequence[float],
           goal_heading: float, dt: float = 0.1) -> RobotEntry:
    """Robot at rest with the given pose; headings fill every angle dim"""
    model = make_model(model_id, dt=dt)
    shape = RobotShape.from_dict(DEFAULT_SHAPES[model.model_id], model)

    def state(pos, theta):
        x = np.zeros(model.state_dim)
        x[list(model.position_dims)] = pos
        for i in model.angle_dims:
            x[i] = theta
        return model.normalize(x)

    return RobotEntry(model, shape, state(position, heading), state(goal_position, goal_heading))


def _box(center, half_extents) -> Obstacle:
    return Obstacle(CollisionShape.box(half_extents), np.asarray(center, dtype=float))


def circle(n: int, radius: float = 4.0, size: float = 11.0, model: str = "unicycle_1st",
           seed: int = 0) -> Scenario:
    """Robots on a circle facing its centre; each goal is the antipodal start"""
    if n < 1:
        raise ContractViolation("circle needs at least one robot")
    center = np.array([size / 2, size / 2])
    robots = []
    for i in range(n):
        angle = 2 * math.pi * i / n
        start = center + radius * np.array([math.cos(angle), math.sin(angle)])
        goal = center - radius * np.array([math.cos(angle), math.sin(angle)])
        heading = angle + math.pi
        robots.append(_robot(ModelId(model), start, heading, goal, heading))
    ws = Workspace(2, np.zeros(2), np.full(2, size))
    return Scenario(f"circle-n{n}", ws, robots).check()


def _random_obstacles(rng: np.random.Generator, dim: int, size: np.ndarray, density: float,
                      half: float = 0.5) -> List[Obstacle]:
    cells = [tuple(c) for c in np.ndindex(*[int(s // (2 * half)) for s in size])]
    target = int(round(density * len(cells)))
    chosen = rng.choice(len(cells), size=target, replace=False) if target else []
    return [_box((np.array(cells[i]) + 0.5) * 2 * half, np.full(dim, half)) for i in sorted(chosen)]


def _sample_free(rng: np.random.Generator, ws: Workspace, model_id: ModelId, placed: List[RobotEntry],
                 attribute: str, clearance: float, attempts: int = 5000):
    for _ in range(attempts):
        pos = rng.uniform(ws.lower + 0.5, ws.upper - 0.5)
        heading = rng.uniform(-math.pi, math.pi)
        candidate = _robot(model_id, pos, heading, pos, heading)
        x = candidate.start
        if not state_free(ws, candidate.shape, x):
            continue
        p = x[list(candidate.model.position_dims)]
        if any(np.linalg.norm(p - getattr(r, attribute)[list(r.model.position_dims)]) < clearance for r in placed):
            continue
        return pos, heading
    raise ScenarioError("could not place a robot; lower the obstacle density or robot count")


def _random_scenario(name: str, n: int, size: np.ndarray, density: float, seed: int,
                     model_id: ModelId) -> Scenario:
    rng = np.random.default_rng(seed)
    dim = len(size)
    ws = Workspace(dim, np.zeros(dim), size, _random_obstacles(rng, dim, size, density))
    robots: List[RobotEntry] = []
    for _ in range(n):
        start, start_heading = _sample_free(rng, ws, model_id, robots, "start", clearance=1.0)
        goal, goal_heading = _sample_free(rng, ws, model_id, robots, "goal", clearance=1.0)
        robots.append(_robot(model_id, start, start_heading, goal, goal_heading))
    return Scenario(name, ws, robots).check()


def random2d(n: int, size: float = 10.0, obstacle_density: float = 0.1, seed: int = 0,
             model: str = "unicycle_1st") -> Scenario:
    """Unit boxes on random grid cells; starts and goals by rejection sampling"""
    return _random_scenario(f"random2d-n{n}-s{seed}", n, np.full(2, size), obstacle_density, seed, ModelId(model))


def random3d(n: int, size: float = 5.0, height: float = 3.0, obstacle_density: float = 0.05,
             seed: int = 0) -> Scenario:
    """Double integrator 3D robots among random unit boxes"""
    dims = np.array([size, size, height])
    return _random_scenario(f"random3d-n{n}-s{seed}", n, dims, obstacle_density, seed,
                            ModelId.DOUBLE_INTEGRATOR_3D)


def headon2(seed: int = 0) -> Scenario:
    """Two unicycles 2 m apart facing each other; goals exchanged"""
    robots = [
        _robot(ModelId.UNICYCLE_1ST, (2.0, 1.5), 0.0, (4.0, 1.5), 0.0),
        _robot(ModelId.UNICYCLE_1ST, (4.0, 1.5), -math.pi, (2.0, 1.5), -math.pi),
    ]
    ws = Workspace(2, np.zeros(2), np.array([6.0, 3.0]))
    return Scenario("headon2", ws, robots).check()


def swap_hetero(n: int = 3, radius: float = 3.0, size: float = 8.0, seed: int = 0) -> Scenario:
    """Antipodal swap with models cycling unicycle / double integrator / car with trailer"""
    models = [ModelId.UNICYCLE_1ST, ModelId.DOUBLE_INTEGRATOR_2D, ModelId.CAR_WITH_TRAILER]
    center = np.array([size / 2, size / 2])
    robots = []
    for i in range(n):
        angle = 2 * math.pi * i / n
        offset = radius * np.array([math.cos(angle), math.sin(angle)])
        heading = angle + math.pi
        robots.append(_robot(models[i % len(models)], center + offset, heading, center - offset, heading))
    ws = Workspace(2, np.zeros(2), np.full(2, size))
    return Scenario(f"swap-hetero-n{n}", ws, robots).check()


def _alcove_workspace() -> Workspace:
    """7 x 2 area: a 0.7 m corridor along y = 0 with a 1 m wide alcove at 3 <= x <= 4"""
    obstacles = [_box((1.5, 1.35), (1.5, 0.65)), _box((5.5, 1.35), (1.5, 0.65))]
    return Workspace(2, np.zeros(2), np.array([7.0, 2.0]), obstacles)


def alcove(seed: int = 0) -> Scenario:
    """Two unicycles meet in the corridor; one has to duck into the alcove"""
    robots = [
        _robot(ModelId.UNICYCLE_1ST, (1.0, 0.35), 0.0, (6.0, 0.35), 0.0),
        _robot(ModelId.UNICYCLE_1ST, (6.0, 0.35), -math.pi, (1.0, 0.35), -math.pi),
    ]
    return Scenario("alcove", _alcove_workspace(), robots).check()


def atgoal(seed: int = 0) -> Scenario:
    """A robot parked on its goal blocks the corridor and must step aside"""
    robots = [
        _robot(ModelId.UNICYCLE_1ST, (1.0, 0.35), 0.0, (6.0, 0.35), 0.0),
        _robot(ModelId.UNICYCLE_1ST, (3.5, 0.35), 0.0, (3.5, 0.35), 0.0),
    ]
    return Scenario("atgoal", _alcove_workspace(), robots).check()


GENERATORS = {
    "circle": circle,
    "random2d": random2d,
    "random3d": random3d,
    "headon2": headon2,
    "swap-hetero": swap_hetero,
    "alcove": alcove,
    "atgoal": atgoal,
}


def gen_scenarios(kind: str, params: Optional[Dict[str, Any]] = None, seed: int = 0,
                  out_dir=None) -> Scenario:
    """Build one scenario (deterministic given the seed) and optionally write it to out_dir"""
    if kind not in GENERATORS:
        raise ContractViolation(f"unknown scenario kind {kind!r}, expected one of {sorted(GENERATORS)}")
    try:
        scenario = GENERATORS[kind](seed=seed, **(params or {}))
    except TypeError as e:
        raise ContractViolation(f"bad parameters for {kind}: {e}")
    if out_dir is not None:
        path = save_scenario(scenario, Path(out_dir) / f"{scenario.name}.json")
        logger.info(f"Wrote scenario {scenario.name} to {path}")
    return scenario
