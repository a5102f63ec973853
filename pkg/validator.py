"""
Independent solution checker
Re-integrates every control with the dynamics module and re-checks bounds and
collisions with the geometry module; nothing from the planner is used.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from dynamics import control_in_bounds, distance, in_bounds, step_values
from geometry import colliding_steps, steps_free
from scenarios import Scenario, Solution

logger = logging.getLogger(__name__)

GOAL_TOLERANCE = 1e-9


@dataclass
class Violation:
    kind: str
    robot: int
    step: Optional[int] = None
    detail: str = ""
    other: Optional[int] = None

    def to_dict(self) -> Dict:
        return {k: v for k, v in self.__dict__.items() if v is not None and v != ""}


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> List[str]:
        return sorted({v.kind for v in self.violations})

    def summary(self) -> str:
        if self.ok:
            return "solution valid"
        lines = [f"{len(self.violations)} violation(s):"]
        for v in self.violations[:20]:
            where = f" step {v.step}" if v.step is not None else ""
            with_other = f" with robot {v.other}" if v.other is not None else ""
            lines.append(f"  robot {v.robot}{where}: {v.kind}{with_other} {v.detail}".rstrip())
        if len(self.violations) > 20:
            lines.append(f"  ... {len(self.violations) - 20} more")
        return "\n".join(lines)


def _padded(states: np.ndarray, length: int) -> np.ndarray:
    if len(states) >= length:
        return states
    hold = np.repeat(states[-1:], length - len(states), axis=0)
    return np.concatenate([states, hold])


def validate(scenario: Scenario, solution: Solution, delta_g: Optional[float] = None,
             margin: float = 0.0) -> ValidationReport:
    """Itemised violations; an empty list means the solution is valid"""
    report = ValidationReport()
    delta_g = scenario.defaults.get("delta_g", 0.3) if delta_g is None else delta_g
    ws = scenario.workspace

    if len(solution.trajectories) != len(scenario.robots):
        report.violations.append(Violation(
            "robot_count", -1, detail=f"{len(solution.trajectories)} trajectories for {len(scenario.robots)} robots"))
        return report

    usable = []
    for i, (robot, traj) in enumerate(zip(scenario.robots, solution.trajectories)):
        model = robot.model
        states, controls = traj.states, traj.controls
        steps = len(states) - 1
        if states.ndim != 2 or states.shape[1] != model.state_dim or steps < 0 or \
                (steps > 0 and controls.shape != (steps, model.control_dim)):
            report.violations.append(Violation("shape", i, detail=f"states {states.shape}, controls {controls.shape}"))
            continue
        usable.append(i)

        if not np.array_equal(states[0], robot.start):
            report.violations.append(Violation("start", i, 0, "first state differs from the scenario start"))

        values = states.tolist()
        for k in range(steps):
            u = controls[k]
            if not control_in_bounds(model, u):
                report.violations.append(Violation("control_bounds", i, k, f"u={np.round(u, 4).tolist()}"))
            if step_values(model, values[k], u.tolist()) != values[k + 1]:
                report.violations.append(Violation("dynamics_residual", i, k + 1))
            if not in_bounds(model, values[k + 1]):
                report.violations.append(Violation("state_bounds", i, k + 1))

        for k in np.flatnonzero(~steps_free(ws, robot.shape.sweep(states))):
            report.violations.append(Violation("environment_collision", i, int(k)))

        final = distance(model, states[-1], robot.goal)
        if final > delta_g + GOAL_TOLERANCE:
            report.violations.append(Violation("goal", i, steps, f"final distance {final:.4f} > {delta_g}"))
        if traj.K > steps:
            report.violations.append(Violation("cost", i, detail=f"K={traj.K} exceeds {steps} steps"))

    if usable:
        length = max(len(solution.trajectories[i].states) for i in usable)
        swept = {i: scenario.robots[i].shape.sweep(_padded(solution.trajectories[i].states, length)) for i in usable}
        for a_index, i in enumerate(usable):
            for j in usable[a_index + 1:]:
                for k in np.flatnonzero(colliding_steps(swept[i], swept[j], margin)):
                    report.violations.append(Violation("robot_collision", i, int(k), other=j))

    if not report.ok:
        logger.info(f"Validation of {solution.scenario} found {len(report.violations)} violation(s)")
    return report
