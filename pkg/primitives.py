#!/usr/bin/env python3
"""
Motion primitives: sampled generation, start-state index, applicable-motion queries,
rollout from a robot's actual state and JSON persistence.

Primitives are stored in canonical form (position dims of the start state are zero),
so only the remaining dims of a query state matter for applicability.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

import component_timer
from dynamics import (DynamicsModel, ModelId, control_in_bounds, distance_many, model_from_spec,
                      rollout, wrap_angles)
from errors import ContractViolation, CorruptPrimitiveFileError, GenerationExhaustedError
from geometry import RobotShape, SweptShape, Workspace, first_blocked_step

logger = logging.getLogger(__name__)

FORMAT_VERSION = "dblacam-primitives/1"
DUPLICATE_DISTANCE = 0.01
OVERSAMPLING_LIMIT = 100
EXTREME_CONTROL_PROBABILITY = 0.3


class StateIndex:
    """
    Exact range / nearest queries under the model metric restricted to `dims`.

    The k-d tree holds weighted coordinates and is queried with Euclidean balls, which
    never exceed the model metric, so it only proposes candidates; the metric itself
    decides. Angle dims are handled by also querying the 2*pi shifted images.
    """

    def __init__(self, model: DynamicsModel, dims: Sequence[int], points):
        self.model = model
        self.dims = tuple(dims)
        points = np.asarray(points, dtype=float).reshape(-1, len(self.dims))
        self._angle_cols = [c for c, i in enumerate(self.dims) if i in model.angle_dims]
        if self._angle_cols and len(points):
            points = points.copy()
            points[:, self._angle_cols] = wrap_angles(points[:, self._angle_cols])
        self.points = points
        self._weights = model.metric_weights[list(self.dims)]
        self._tree = cKDTree(points * self._weights) if len(points) else None

    def __len__(self):
        return len(self.points)

    def _query_images(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(len(self.dims))
        if not self._angle_cols:
            return (q * self._weights)[None, :]
        q = q.copy()
        q[self._angle_cols] = wrap_angles(q[self._angle_cols])
        images = []
        for shifts in itertools.product((-2 * math.pi, 0.0, 2 * math.pi), repeat=len(self._angle_cols)):
            shifted = q.copy()
            shifted[self._angle_cols] += shifts
            images.append(shifted * self._weights)
        return np.array(images)

    def exact(self, indices, q) -> np.ndarray:
        return distance_many(self.model, self.points[indices], q, self.dims)

    def within(self, q, radius: float) -> List[int]:
        """Indices (ascending) of points with metric distance <= radius"""
        if self._tree is None:
            return []
        if math.isinf(radius):
            return list(range(len(self.points)))
        reach = radius * (1.0 + 1e-9) + 1e-12
        candidates = set()
        for image in self._query_images(q):
            candidates.update(self._tree.query_ball_point(image, reach))
        if not candidates:
            return []
        indices = np.array(sorted(candidates))
        keep = self.exact(indices, q) <= radius
        return [int(i) for i in indices[keep]]

    def nearest(self, q) -> Tuple[int, float]:
        """(index, distance) of the closest point; ties go to the lower index"""
        if self._tree is None:
            return -1, math.inf
        images = self._query_images(q)
        _, seeds = self._tree.query(images, k=1)
        seeds = np.unique(np.atleast_1d(seeds))
        bound = float(np.min(self.exact(seeds, q)))
        reach = bound * (1.0 + 1e-9) + 1e-12
        candidates = set(int(i) for i in seeds)
        for image in images:
            candidates.update(self._tree.query_ball_point(image, reach))
        indices = np.array(sorted(candidates))
        distances = self.exact(indices, q)
        best = int(np.argmin(distances))
        return int(indices[best]), float(distances[best])


@dataclass(frozen=True, eq=False)
class MotionPrimitive:
    """Canonical state/control sequence; states[k+1] = step(states[k], controls[k]) exactly"""
    id: int
    states: np.ndarray
    controls: np.ndarray
    model_id: ModelId

    @property
    def K(self) -> int:
        return len(self.controls)

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def is_stay(self) -> bool:
        return bool(np.all(self.controls == 0.0))


@dataclass(eq=False)
class RolledMotion:
    """A primitive's controls replayed from a robot's actual state"""
    primitive_id: int
    robot: int
    states: np.ndarray
    controls: np.ndarray
    swept: SweptShape
    h: float = math.inf

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def K(self) -> int:
        return len(self.controls)


class PrimitiveSet:
    """Primitives of one model sharing one horizon, indexed by reduced start state"""

    def __init__(self, model: DynamicsModel, horizon: int, primitives: Sequence[MotionPrimitive]):
        self.model = model
        self.horizon = horizon
        self.primitives = list(primitives)
        for p in self.primitives:
            if p.K != horizon or p.model_id != model.model_id:
                raise ContractViolation(f"primitive {p.id} does not match set horizon/model")
        dims = model.reduced_dims
        starts = np.array([p.start[list(dims)] for p in self.primitives]).reshape(-1, len(dims))
        self.start_index = StateIndex(model, dims, starts)

    @property
    def model_id(self) -> ModelId:
        return self.model.model_id

    def __len__(self):
        return len(self.primitives)

    def __iter__(self):
        return iter(self.primitives)

    def summary(self) -> Dict:
        """Count, stays and mean final displacement"""
        displacement = [
            float(np.linalg.norm(p.final_state[list(self.model.position_dims)])) for p in self.primitives
        ]
        return {
            "model": self.model_id.value,
            "count": len(self.primitives),
            "horizon": self.horizon,
            "stays": sum(1 for p in self.primitives if p.is_stay),
            "mean_final_displacement": float(np.mean(displacement)) if displacement else 0.0,
        }


# --- generation -------------------------------------------------------------------

def _sample_start(model: DynamicsModel, rng: np.random.Generator) -> np.ndarray:
    x = np.zeros(model.state_dim)
    for i in model.angle_dims:
        x[i] = rng.uniform(-math.pi, math.pi)
    for i in model.velocity_dims:
        x[i] = rng.uniform(model.state_lower[i], model.state_upper[i])
    return x


def _sample_controls(model: DynamicsModel, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-constant controls: 2-4 segments, values biased towards the bounds"""
    segments = min(int(rng.integers(2, 5)), horizon)
    cuts = sorted(rng.choice(np.arange(1, horizon), size=segments - 1, replace=False)) if segments > 1 else []
    bounds = [0] + [int(c) for c in cuts] + [horizon]

    controls = np.zeros((horizon, model.control_dim))
    for start, end in zip(bounds[:-1], bounds[1:]):
        u = np.empty(model.control_dim)
        for j in range(model.control_dim):
            lo, hi = model.control_lower[j], model.control_upper[j]
            if rng.random() < EXTREME_CONTROL_PROBABILITY:
                u[j] = lo if rng.random() < 0.5 else hi
            else:
                u[j] = rng.uniform(lo, hi)
        controls[start:end] = u
    return controls


def _is_duplicate(model: DynamicsModel, finals: List[np.ndarray], candidate: np.ndarray) -> bool:
    if not finals:
        return False
    return bool(np.min(distance_many(model, np.array(finals), candidate)) < DUPLICATE_DISTANCE)


def generate_primitives(model: DynamicsModel, count: int, horizon: int, seed: int = 0,
                        stay_bins: int = 8, existing: Optional[PrimitiveSet] = None) -> PrimitiveSet:
    """
    Sample `count` distinct canonical primitives (deterministic given the seed).

    Stay primitives go first when the set is new; with `existing`, the new primitives
    are appended after its members and must be distinct from them too.
    """
    if count <= 0 or horizon <= 0:
        raise ContractViolation("count and horizon must be positive")
    if existing is not None and existing.horizon != horizon:
        raise ContractViolation("cannot extend a set with a different horizon")

    rng = np.random.default_rng(seed)
    primitives: List[MotionPrimitive] = list(existing.primitives) if existing else []
    finals = [p.final_state for p in primitives]
    target = len(primitives) + count

    if existing is None:
        zeros = np.zeros((horizon, model.control_dim))
        for start in model.stay_starts(stay_bins):
            if len(primitives) >= target:
                break
            states, ok = rollout(model, start, zeros)
            if ok and not _is_duplicate(model, finals, states[-1]):
                primitives.append(MotionPrimitive(len(primitives), states, zeros.copy(), model.model_id))
                finals.append(states[-1])

    attempts = 0
    budget = OVERSAMPLING_LIMIT * count
    while len(primitives) < target:
        if attempts >= budget:
            raise GenerationExhaustedError(
                f"only {len(primitives)} of {target} primitives after {attempts} samples for {model.model_id.value}"
            )
        attempts += 1
        start = _sample_start(model, rng)
        controls = _sample_controls(model, horizon, rng)
        states, ok = rollout(model, start, controls)
        if not ok or _is_duplicate(model, finals, states[-1]):
            continue
        primitives.append(MotionPrimitive(len(primitives), states, controls, model.model_id))
        finals.append(states[-1])

    logger.info(f"Generated {len(primitives)} primitives for {model.model_id.value} "
                f"(K={horizon}, seed={seed}, {attempts} samples)")
    return PrimitiveSet(model, horizon, primitives)


# --- queries ----------------------------------------------------------------------

def applicable_motions(pset: PrimitiveSet, x, alpha_delta: float) -> List[MotionPrimitive]:
    """Primitives whose reduced start lies within alpha_delta of x's reduced state, in id order"""
    x = pset.model.check_state(x)
    if math.isinf(alpha_delta):
        return list(pset.primitives)
    query = x[list(pset.model.reduced_dims)]
    return [pset.primitives[i] for i in pset.start_index.within(query, alpha_delta)]


def rollout_applicable(model: DynamicsModel, ws: Workspace, shape: RobotShape, x,
                       candidates: Sequence[MotionPrimitive], robot: int = 0,
                       timer: Optional[component_timer.ComponentTimer] = None) -> List[RolledMotion]:
    """Replay each candidate's controls from x; drop out-of-bounds or colliding results"""
    x = model.check_state(x)
    motions = []
    for primitive in candidates:
        if timer is not None:
            with timer.section(component_timer.ROLLOUT):
                states, ok = rollout(model, x, primitive.controls)
        else:
            states, ok = rollout(model, x, primitive.controls)
        if not ok:
            continue
        swept = shape.sweep(states)
        if first_blocked_step(ws, swept) is not None:
            continue
        motions.append(RolledMotion(primitive.id, robot, states, primitive.controls, swept))
    return motions


# --- persistence ------------------------------------------------------------------

def save_set(pset: PrimitiveSet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": FORMAT_VERSION,
        "model_id": pset.model_id.value,
        "dt": pset.model.dt,
        "K": pset.horizon,
        "count": len(pset),
        "model": pset.model.to_spec(),
        "primitives": [
            {"id": p.id, "states": p.states.tolist(), "controls": p.controls.tolist()}
            for p in pset.primitives
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
    logger.info(f"Saved {len(pset)} primitives to {path}")
    return path


def load_set(path, model: Optional[DynamicsModel] = None) -> PrimitiveSet:
    """Load and re-validate a primitive file; residuals must be exactly zero"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CorruptPrimitiveFileError(f"cannot read primitive file {path}: {e}")

    if payload.get("version") != FORMAT_VERSION:
        raise CorruptPrimitiveFileError(f"{path}: unsupported version {payload.get('version')!r}")
    try:
        file_model = model_from_spec(payload["model"])
        horizon = int(payload["K"])
        entries = payload["primitives"]
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptPrimitiveFileError(f"{path}: malformed header: {e}")

    if model is None:
        model = file_model
    if payload.get("model_id") != model.model_id.value or float(payload.get("dt", -1)) != model.dt:
        raise CorruptPrimitiveFileError(
            f"{path}: file holds {payload.get('model_id')} at dt={payload.get('dt')}, "
            f"expected {model.model_id.value} at dt={model.dt}"
        )
    if int(payload.get("count", -1)) != len(entries):
        raise CorruptPrimitiveFileError(f"{path}: count does not match the number of primitives")

    primitives = []
    for entry in entries:
        states = np.asarray(entry["states"], dtype=float)
        controls = np.asarray(entry["controls"], dtype=float).reshape(-1, model.control_dim)
        if states.shape != (horizon + 1, model.state_dim) or len(controls) != horizon:
            raise CorruptPrimitiveFileError(f"{path}: primitive {entry.get('id')} has wrong shape")
        if np.any(states[0, list(model.position_dims)] != 0.0):
            raise CorruptPrimitiveFileError(f"{path}: primitive {entry.get('id')} is not canonical")
        if not all(control_in_bounds(model, u) for u in controls):
            raise CorruptPrimitiveFileError(f"{path}: primitive {entry.get('id')} violates control bounds")
        replay, _ = rollout(model, states[0], controls)
        if not np.array_equal(replay, states):
            bad = int(np.flatnonzero(np.any(replay != states, axis=1))[0])
            raise CorruptPrimitiveFileError(
                f"{path}: primitive {entry.get('id')} has a dynamics residual at step {bad}"
            )
        primitives.append(MotionPrimitive(int(entry["id"]), states, controls, model.model_id))

    logger.info(f"Loaded {len(primitives)} primitives from {path}")
    return PrimitiveSet(model, horizon, primitives)
