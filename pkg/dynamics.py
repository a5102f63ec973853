#!/usr/bin/env python3
"""
Robot dynamics models for the kinodynamic planner
Explicit Euler integration x_{k+1} = x_k + f(x_k, u_k) * dt, rollouts, bounds and the
per-model state metric.

Supported models (registry is extensible):
    unicycle_1st          state (x, y, theta)             control (v, omega)
    double_integrator_2d  state (x, y, vx, vy)            control (ax, ay)
    double_integrator_3d  state (x, y, z, vx, vy, vz)     control (ax, ay, az)
    car_with_trailer      state (x, y, theta1, theta2)    control (v, phi)

Integration runs on plain Python floats so that every caller (planner rollouts and the
validator alike) gets bitwise-identical results for identical inputs.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ContractViolation

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

DEFAULT_POSITION_WEIGHT = 1.0
DEFAULT_ANGLE_WEIGHT = 0.5
DEFAULT_VELOCITY_WEIGHT = 0.25


class ModelId(str, Enum):
    UNICYCLE_1ST = "unicycle_1st"
    DOUBLE_INTEGRATOR_2D = "double_integrator_2d"
    DOUBLE_INTEGRATOR_3D = "double_integrator_3d"
    CAR_WITH_TRAILER = "car_with_trailer"


def wrap_angle(value: float) -> float:
    """Map an angle into [-pi, pi); values already inside are returned untouched"""
    if -math.pi <= value < math.pi:
        return value
    wrapped = math.fmod(value + math.pi, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    wrapped -= math.pi
    if wrapped >= math.pi:
        wrapped -= TWO_PI
    if wrapped < -math.pi:
        wrapped = -math.pi
    return wrapped


def wrap_angles(values: np.ndarray) -> np.ndarray:
    """Vectorised wrap_angle"""
    values = np.asarray(values, dtype=float)
    inside = (values >= -math.pi) & (values < math.pi)
    wrapped = np.mod(values + math.pi, TWO_PI) - math.pi
    wrapped = np.where(wrapped >= math.pi, wrapped - TWO_PI, wrapped)
    wrapped = np.maximum(wrapped, -math.pi)
    return np.where(inside, values, wrapped)


@dataclass(frozen=True, eq=False)
class DynamicsModel:
    """A robot dynamics model with bounds and metric weights"""
    model_id: ModelId
    dt: float
    state_lower: np.ndarray
    state_upper: np.ndarray
    control_lower: np.ndarray
    control_upper: np.ndarray
    angle_dims: Tuple[int, ...]
    position_dims: Tuple[int, ...]
    velocity_dims: Tuple[int, ...]
    metric_weights: np.ndarray
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ContractViolation(f"dt must be positive, got {self.dt}")
        n = len(self.state_lower)
        if len(self.state_upper) != n or len(self.metric_weights) != n:
            raise ContractViolation("state bounds and metric weights must share the state dimension")
        if len(self.control_lower) != len(self.control_upper):
            raise ContractViolation("control bounds must share the control dimension")
        for i in range(n):
            if i not in self.angle_dims and self.state_lower[i] > self.state_upper[i]:
                raise ContractViolation(f"state bound {i}: lower > upper")
        if np.any(self.control_lower > self.control_upper):
            raise ContractViolation("control lower bound exceeds upper bound")
        if np.any(self.metric_weights < 0) or not np.any(self.metric_weights > 0):
            raise ContractViolation("metric weights must be >= 0 with at least one positive")
        for name in ("L", "L_h"):
            if name in self.params and not self.params[name] > 0:
                raise ContractViolation(f"model parameter {name} must be positive")

    @property
    def state_dim(self) -> int:
        return len(self.state_lower)

    @property
    def control_dim(self) -> int:
        return len(self.control_lower)

    @property
    def workspace_dim(self) -> int:
        return len(self.position_dims)

    @cached_property
    def reduced_dims(self) -> Tuple[int, ...]:
        """State dimensions that survive translation canonicalisation"""
        return tuple(i for i in range(self.state_dim) if i not in self.position_dims)

    @cached_property
    def heading_dim(self) -> Optional[int]:
        return self.angle_dims[0] if self.angle_dims else None

    @cached_property
    def _bounded_dims(self) -> List[Tuple[int, float, float]]:
        return [
            (i, float(self.state_lower[i]), float(self.state_upper[i]))
            for i in range(self.state_dim)
            if i not in self.angle_dims
            and (np.isfinite(self.state_lower[i]) or np.isfinite(self.state_upper[i]))
        ]

    @cached_property
    def derivative(self) -> Callable[[List[float], List[float]], List[float]]:
        """f(x, u) on plain float lists"""
        return DERIVATIVE_BUILDERS[self.model_id](self)

    @cached_property
    def max_speed(self) -> float:
        """Upper bound on translational speed, used to convert distance to time"""
        if self.velocity_dims:
            per_axis = [max(abs(self.state_lower[i]), abs(self.state_upper[i])) for i in self.velocity_dims]
            return float(math.sqrt(sum(v * v for v in per_axis)))
        return float(max(abs(self.control_lower[0]), abs(self.control_upper[0])))

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.state_dim,):
            raise ContractViolation(
                f"{self.model_id.value}: state must have shape ({self.state_dim},), got {x.shape}"
            )
        return x

    def check_control(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.control_dim,):
            raise ContractViolation(
                f"{self.model_id.value}: control must have shape ({self.control_dim},), got {u.shape}"
            )
        return u

    def normalize(self, x) -> np.ndarray:
        """Wrap the angle dimensions of a state"""
        x = np.array(self.check_state(x), dtype=float)
        for i in self.angle_dims:
            x[i] = wrap_angle(float(x[i]))
        return x

    def zero_control(self) -> np.ndarray:
        return np.zeros(self.control_dim)

    def stay_starts(self, bins: int) -> List[np.ndarray]:
        """Canonical start states at which the zero control is a fixed point"""
        if self.velocity_dims:
            return [np.zeros(self.state_dim)]
        headings = [-math.pi + TWO_PI * k / bins for k in range(max(bins, 1))]
        starts = []
        if len(self.angle_dims) == 1:
            for theta in headings:
                x = np.zeros(self.state_dim)
                x[self.angle_dims[0]] = theta
                starts.append(x)
        else:
            for theta1 in headings:
                for theta2 in headings:
                    x = np.zeros(self.state_dim)
                    x[self.angle_dims[0]] = theta1
                    x[self.angle_dims[1]] = theta2
                    starts.append(x)
        return starts

    def to_spec(self) -> Dict:
        """JSON-compatible description, inverse of model_from_spec"""
        def _list(values):
            return [None if not np.isfinite(v) else float(v) for v in values]

        return {
            "model": self.model_id.value,
            "dt": self.dt,
            "state_lower": _list(self.state_lower),
            "state_upper": _list(self.state_upper),
            "control_lower": [float(v) for v in self.control_lower],
            "control_upper": [float(v) for v in self.control_upper],
            "metric_weights": [float(v) for v in self.metric_weights],
            "params": dict(self.params),
        }


# --- continuous dynamics f(x, u) --------------------------------------------------

def _unicycle(model: DynamicsModel):
    def f(x, u):
        theta = x[2]
        v, omega = u
        return [v * math.cos(theta), v * math.sin(theta), omega]
    return f


def _double_integrator(model: DynamicsModel):
    half = model.state_dim // 2

    def f(x, u):
        return list(x[half:]) + list(u)
    return f


def _car_with_trailer(model: DynamicsModel):
    wheelbase = model.params["L"]
    hitch = model.params["L_h"]

    def f(x, u):
        theta1, theta2 = x[2], x[3]
        v, phi = u
        return [
            v * math.cos(theta1),
            v * math.sin(theta1),
            v / wheelbase * math.tan(phi),
            v / hitch * math.sin(theta1 - theta2),
        ]
    return f


DERIVATIVE_BUILDERS = {
    ModelId.UNICYCLE_1ST: _unicycle,
    ModelId.DOUBLE_INTEGRATOR_2D: _double_integrator,
    ModelId.DOUBLE_INTEGRATOR_3D: _double_integrator,
    ModelId.CAR_WITH_TRAILER: _car_with_trailer,
}


def step_values(model: DynamicsModel, x: Sequence[float], u: Sequence[float]) -> List[float]:
    """One Euler step on plain floats; the single integration code path"""
    dx = model.derivative(x, u)
    dt = model.dt
    nxt = [x[i] + dx[i] * dt for i in range(len(x))]
    for i in model.angle_dims:
        nxt[i] = wrap_angle(nxt[i])
    return nxt


def step(model: DynamicsModel, x, u) -> np.ndarray:
    """x + f(x, u) * dt with angle dims wrapped"""
    x = model.check_state(x)
    u = model.check_control(u)
    return np.array(step_values(model, x.tolist(), u.tolist()), dtype=float)


def in_bounds(model: DynamicsModel, x) -> bool:
    """State bounds on non-angle dimensions (angles always wrap)"""
    values = x.tolist() if isinstance(x, np.ndarray) else list(x)
    for i, lo, hi in model._bounded_dims:
        if values[i] < lo or values[i] > hi:
            return False
    return True


def control_in_bounds(model: DynamicsModel, u) -> bool:
    u = np.asarray(u, dtype=float)
    return bool(np.all(u >= model.control_lower) and np.all(u <= model.control_upper))


def rollout(model: DynamicsModel, x0, controls) -> Tuple[np.ndarray, bool]:
    """
    Forward-propagate x0 through a control sequence.

    Returns the (K+1, state_dim) state array and whether every state stayed within the
    state bounds. Out-of-bounds states are reported, never clamped.
    """
    x0 = model.check_state(x0)
    controls = np.asarray(controls, dtype=float).reshape(-1, model.control_dim)
    values = x0.tolist()
    ok = in_bounds(model, values)
    rows = [values]
    for u in controls.tolist():
        values = step_values(model, values, u)
        if ok and not in_bounds(model, values):
            ok = False
        rows.append(values)
    return np.array(rows, dtype=float), ok


# --- metric -----------------------------------------------------------------------

def _component_terms(model: DynamicsModel, diff: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """
    Weighted distance over the selected dims for a (n, len(dims)) difference array.
    Position dims form one Euclidean block, angle dims use the shortest arc, the rest |.|
    """
    dims = list(dims)
    weights = model.metric_weights[dims]
    diff = np.abs(diff)
    angle_cols = [c for c, i in enumerate(dims) if i in model.angle_dims]
    if angle_cols:
        arc = np.mod(diff[:, angle_cols], TWO_PI)
        diff[:, angle_cols] = np.minimum(arc, TWO_PI - arc)
    weighted = diff * weights
    pos_cols = [c for c, i in enumerate(dims) if i in model.position_dims]
    other_cols = [c for c in range(len(dims)) if c not in pos_cols]
    total = np.zeros(diff.shape[0])
    if pos_cols:
        total += np.sqrt(np.sum(weighted[:, pos_cols] ** 2, axis=1))
    if other_cols:
        total += np.sum(weighted[:, other_cols], axis=1)
    return total


def distance_many(model: DynamicsModel, states, x, dims: Optional[Sequence[int]] = None) -> np.ndarray:
    """Distances from each row of `states` to `x` (both restricted to `dims` when given)"""
    dims = tuple(range(model.state_dim)) if dims is None else tuple(dims)
    states = np.asarray(states, dtype=float).reshape(-1, len(dims))
    x = np.asarray(x, dtype=float).reshape(len(dims))
    return _component_terms(model, states - x, dims)


def distance(model: DynamicsModel, a, b) -> float:
    """Weighted state metric; symmetric, zero iff equal modulo angle wrap"""
    a = model.check_state(a)
    b = model.check_state(b)
    return float(distance_many(model, a[None, :], b)[0])


def position_distance(model: DynamicsModel, a, b) -> float:
    """Unweighted Euclidean distance between the position blocks"""
    pa = np.asarray(a, dtype=float)[list(model.position_dims)]
    pb = np.asarray(b, dtype=float)[list(model.position_dims)]
    return float(np.linalg.norm(pa - pb))


# --- registry ---------------------------------------------------------------------

def _weights(position_dims, angle_dims, velocity_dims, n) -> np.ndarray:
    w = np.zeros(n)
    for i in position_dims:
        w[i] = DEFAULT_POSITION_WEIGHT
    for i in angle_dims:
        w[i] = DEFAULT_ANGLE_WEIGHT
    for i in velocity_dims:
        w[i] = DEFAULT_VELOCITY_WEIGHT
    return w


def _build_unicycle(dt: float) -> dict:
    inf = np.inf
    return dict(
        state_lower=np.array([-inf, -inf, -math.pi]),
        state_upper=np.array([inf, inf, math.pi]),
        control_lower=np.array([-0.5, -0.5]),
        control_upper=np.array([0.5, 0.5]),
        angle_dims=(2,), position_dims=(0, 1), velocity_dims=(),
        params={},
    )


def _build_double_integrator(dim: int):
    def build(dt: float) -> dict:
        inf = np.inf
        return dict(
            state_lower=np.array([-inf] * dim + [-0.5] * dim),
            state_upper=np.array([inf] * dim + [0.5] * dim),
            control_lower=np.array([-1.0] * dim),
            control_upper=np.array([1.0] * dim),
            angle_dims=(),
            position_dims=tuple(range(dim)),
            velocity_dims=tuple(range(dim, 2 * dim)),
            params={},
        )
    return build


def _build_car_with_trailer(dt: float) -> dict:
    inf = np.inf
    return dict(
        state_lower=np.array([-inf, -inf, -math.pi, -math.pi]),
        state_upper=np.array([inf, inf, math.pi, math.pi]),
        control_lower=np.array([-0.1, -math.pi / 3]),
        control_upper=np.array([0.5, math.pi / 3]),
        angle_dims=(2, 3), position_dims=(0, 1), velocity_dims=(),
        params={"L": 0.25, "L_h": 0.5},
    )


MODEL_BUILDERS: Dict[ModelId, Callable[[float], dict]] = {
    ModelId.UNICYCLE_1ST: _build_unicycle,
    ModelId.DOUBLE_INTEGRATOR_2D: _build_double_integrator(2),
    ModelId.DOUBLE_INTEGRATOR_3D: _build_double_integrator(3),
    ModelId.CAR_WITH_TRAILER: _build_car_with_trailer,
}


def make_model(model_id, dt: float = 0.1, **overrides) -> DynamicsModel:
    """Build a registered model with default bounds; any field may be overridden"""
    try:
        model_id = ModelId(model_id)
    except ValueError:
        raise ContractViolation(f"unknown dynamics model {model_id!r}")
    fields = MODEL_BUILDERS[model_id](dt)
    fields["metric_weights"] = _weights(
        fields["position_dims"], fields["angle_dims"], fields["velocity_dims"], len(fields["state_lower"])
    )
    params = dict(fields.pop("params"))
    params.update(overrides.pop("params", {}) or {})
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in fields:
            raise ContractViolation(f"unknown model field {key!r}")
        fields[key] = np.array(value, dtype=float) if isinstance(fields[key], np.ndarray) else value
    return DynamicsModel(model_id=model_id, dt=float(dt), params=params, **fields)


def model_from_spec(spec: Dict) -> DynamicsModel:
    """Build a model from a scenario robot entry / solution metadata"""
    overrides = {}
    for key in ("control_lower", "control_upper", "metric_weights"):
        if spec.get(key) is not None:
            overrides[key] = spec[key]
    for key, sign in (("state_lower", -1), ("state_upper", 1)):
        if spec.get(key) is not None:
            overrides[key] = [sign * np.inf if v is None else v for v in spec[key]]
    return make_model(spec["model"], dt=spec.get("dt", 0.1), params=spec.get("params"), **overrides)
