"""
Workspace, obstacles, robot collision shapes and collision checking
Discrete-time semantics: shapes are only checked at the dt grid, and robot-robot
checks compare equal step indices only.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from errors import ContractViolation

logger = logging.getLogger(__name__)


class ShapeKind(str, Enum):
    SPHERE = "sphere"
    BOX = "box"


@dataclass(frozen=True, eq=False)
class CollisionShape:
    """A sphere (radius) or a box (half extents, yaw-oriented in the xy plane)"""
    kind: ShapeKind
    radius: float = 0.0
    half_extents: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        if self.kind == ShapeKind.SPHERE:
            if not self.radius > 0:
                raise ContractViolation(f"sphere radius must be positive, got {self.radius}")
        else:
            if self.half_extents is None:
                raise ContractViolation("box shape needs half_extents")
            he = np.asarray(self.half_extents, dtype=float)
            if np.any(he <= 0):
                raise ContractViolation(f"box half extents must be positive, got {he}")
            object.__setattr__(self, "half_extents", he)

    @classmethod
    def sphere(cls, radius: float) -> "CollisionShape":
        return cls(ShapeKind.SPHERE, radius=radius)

    @classmethod
    def box(cls, half_extents) -> "CollisionShape":
        return cls(ShapeKind.BOX, half_extents=np.asarray(half_extents, dtype=float))

    @property
    def inscribed_radius(self) -> float:
        if self.kind == ShapeKind.SPHERE:
            return self.radius
        return float(np.min(self.half_extents[:2]))

    def extents(self, yaw: np.ndarray, dim: int) -> np.ndarray:
        """Half widths of the axis-aligned bounding box, one row per yaw"""
        yaw = np.atleast_1d(yaw)
        if self.kind == ShapeKind.SPHERE:
            return np.full((len(yaw), dim), self.radius)
        c, s = np.abs(np.cos(yaw)), np.abs(np.sin(yaw))
        hx, hy = self.half_extents[0], self.half_extents[1]
        cols = [c * hx + s * hy, s * hx + c * hy]
        if dim == 3:
            cols.append(np.full(len(yaw), self.half_extents[2] if len(self.half_extents) > 2 else 0.0))
        return np.stack(cols, axis=1)

    def to_dict(self) -> Dict:
        if self.kind == ShapeKind.SPHERE:
            return {"type": "sphere", "radius": self.radius}
        return {"type": "box", "half_extents": [float(v) for v in self.half_extents]}

    @classmethod
    def from_dict(cls, data: Dict) -> "CollisionShape":
        if data.get("type") == "sphere":
            return cls.sphere(float(data["radius"]))
        if data.get("type") == "box":
            return cls.box(data["half_extents"])
        raise ContractViolation(f"unknown shape type {data.get('type')!r}")


@dataclass(frozen=True, eq=False)
class Pose:
    center: np.ndarray
    yaw: float = 0.0


@dataclass(frozen=True, eq=False)
class Obstacle:
    shape: CollisionShape
    center: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def dim(self) -> int:
        return len(self.center)

    def aabb(self) -> Tuple[np.ndarray, np.ndarray]:
        ext = self.shape.extents(np.array([self.yaw]), self.dim)[0]
        return self.center - ext, self.center + ext

    def to_dict(self) -> Dict:
        data = self.shape.to_dict()
        data["center"] = [float(v) for v in self.center]
        if self.yaw:
            data["yaw"] = self.yaw
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "Obstacle":
        return cls(CollisionShape.from_dict(data), np.asarray(data["center"], dtype=float), float(data.get("yaw", 0.0)))


@dataclass(eq=False)
class Workspace:
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    obstacles: List[Obstacle] = field(default_factory=list)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.dim not in (2, 3):
            raise ContractViolation(f"workspace dim must be 2 or 3, got {self.dim}")
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise ContractViolation("workspace bounds must match its dimension")
        if np.any(self.lower >= self.upper):
            raise ContractViolation("workspace lower bound must be < upper bound")
        for obstacle in self.obstacles:
            if obstacle.dim != self.dim:
                raise ContractViolation("obstacle dimension differs from workspace")
        boxes = [o.aabb() for o in self.obstacles]
        self._obstacle_lower = np.array([b[0] for b in boxes]).reshape(-1, self.dim)
        self._obstacle_upper = np.array([b[1] for b in boxes]).reshape(-1, self.dim)

    def obstacles_near(self, lower: np.ndarray, upper: np.ndarray) -> List[Obstacle]:
        """Obstacles whose bounding box overlaps [lower, upper]"""
        if not self.obstacles:
            return []
        hit = np.all(self._obstacle_lower <= upper, axis=1) & np.all(self._obstacle_upper >= lower, axis=1)
        return [self.obstacles[i] for i in np.flatnonzero(hit)]

    def to_dict(self) -> Dict:
        return {
            "dim": self.dim,
            "lower": [float(v) for v in self.lower],
            "upper": [float(v) for v in self.upper],
            "obstacles": [o.to_dict() for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Workspace":
        return cls(
            dim=int(data["dim"]),
            lower=np.asarray(data["lower"], dtype=float),
            upper=np.asarray(data["upper"], dtype=float),
            obstacles=[Obstacle.from_dict(o) for o in data.get("obstacles", [])],
        )


@dataclass(eq=False)
class SweptShape:
    """Per-part poses of a robot along a state sequence plus the bounding box of all of it"""
    parts: List[Tuple[CollisionShape, np.ndarray, np.ndarray]]
    lower: np.ndarray
    upper: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.parts[0][1])


@dataclass(frozen=True, eq=False)
class RobotShape:
    """
    Collision shape attached to a robot state.
    Position comes from the position dims, orientation from the heading dim when the
    model has one; a trailer box sits hitch_length behind the trailer heading.
    """
    body: CollisionShape
    position_dims: Tuple[int, ...]
    heading_dim: Optional[int] = None
    trailer: Optional[CollisionShape] = None
    trailer_dim: Optional[int] = None
    hitch_length: float = 0.0

    @classmethod
    def for_model(cls, model, body: CollisionShape, trailer: Optional[CollisionShape] = None) -> "RobotShape":
        trailer_dim = None
        hitch = 0.0
        if trailer is not None:
            if len(model.angle_dims) < 2 or "L_h" not in model.params:
                raise ContractViolation("a trailer shape needs a model with a trailer heading and L_h")
            trailer_dim = model.angle_dims[1]
            hitch = float(model.params["L_h"])
        return cls(body, tuple(model.position_dims), model.heading_dim, trailer, trailer_dim, hitch)

    @property
    def dim(self) -> int:
        return len(self.position_dims)

    @property
    def min_radius(self) -> float:
        radii = [self.body.inscribed_radius]
        if self.trailer is not None:
            radii.append(self.trailer.inscribed_radius)
        return min(radii)

    def sweep(self, states) -> SweptShape:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        n = len(states)
        centers = states[:, list(self.position_dims)]
        yaw = states[:, self.heading_dim] if self.heading_dim is not None else np.zeros(n)
        parts = [(self.body, centers, yaw)]
        if self.trailer is not None:
            theta2 = states[:, self.trailer_dim]
            offset = np.stack([np.cos(theta2), np.sin(theta2)], axis=1) * self.hitch_length
            parts.append((self.trailer, centers - offset, theta2))

        lower = np.full(self.dim, np.inf)
        upper = np.full(self.dim, -np.inf)
        for shape, c, y in parts:
            ext = shape.extents(y, self.dim)
            lower = np.minimum(lower, np.min(c - ext, axis=0))
            upper = np.maximum(upper, np.max(c + ext, axis=0))
        return SweptShape(parts, lower, upper)

    def to_dict(self) -> Dict:
        data = {"body": self.body.to_dict()}
        if self.trailer is not None:
            data["trailer"] = self.trailer.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict, model) -> "RobotShape":
        trailer = CollisionShape.from_dict(data["trailer"]) if data.get("trailer") else None
        return cls.for_model(model, CollisionShape.from_dict(data["body"]), trailer)


# --- narrowphase (vectorised over step indices) -----------------------------------

def _to_local(rel: np.ndarray, yaw: np.ndarray) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    local = np.array(rel, dtype=float)
    local[:, 0] = c * rel[:, 0] + s * rel[:, 1]
    local[:, 1] = -s * rel[:, 0] + c * rel[:, 1]
    return local


def _box_half(shape: CollisionShape, dim: int) -> np.ndarray:
    he = shape.half_extents
    if len(he) < dim:
        raise ContractViolation(f"box with {len(he)} half extents used in a {dim}D workspace")
    return he[:dim]


def _sphere_sphere(ca, ra, cb, rb, margin) -> np.ndarray:
    return np.linalg.norm(ca - cb, axis=1) < ra + rb + margin


def _sphere_box(cs, r, box: CollisionShape, cb, yaw, margin) -> np.ndarray:
    local = _to_local(cs - cb, yaw)
    he = _box_half(box, cs.shape[1])
    nearest = np.clip(local, -he, he)
    return np.linalg.norm(local - nearest, axis=1) < r + margin


def _box_box(box_a: CollisionShape, ca, yaw_a, box_b: CollisionShape, cb, yaw_b, margin) -> np.ndarray:
    dim = ca.shape[1]
    ha = _box_half(box_a, dim)
    hb = _box_half(box_b, dim)
    d = (cb - ca)[:, :2]
    ua = np.stack([np.cos(yaw_a), np.sin(yaw_a)], axis=1)
    va = np.stack([-np.sin(yaw_a), np.cos(yaw_a)], axis=1)
    ub = np.stack([np.cos(yaw_b), np.sin(yaw_b)], axis=1)
    vb = np.stack([-np.sin(yaw_b), np.cos(yaw_b)], axis=1)

    def dot(p, q):
        return np.sum(p * q, axis=1)

    separated = np.zeros(len(ca), dtype=bool)
    for axis in (ua, va, ub, vb):
        ra = ha[0] * np.abs(dot(axis, ua)) + ha[1] * np.abs(dot(axis, va))
        rb = hb[0] * np.abs(dot(axis, ub)) + hb[1] * np.abs(dot(axis, vb))
        separated |= np.abs(dot(axis, d)) >= ra + rb + margin
    if dim == 3:
        separated |= np.abs(cb[:, 2] - ca[:, 2]) >= ha[2] + hb[2] + margin
    return ~separated


def _intersect(a: CollisionShape, ca, yaw_a, b: CollisionShape, cb, yaw_b, margin: float) -> np.ndarray:
    if ca.shape[1] != cb.shape[1]:
        raise ContractViolation("shapes live in workspaces of different dimension")
    if a.kind == ShapeKind.SPHERE and b.kind == ShapeKind.SPHERE:
        return _sphere_sphere(ca, a.radius, cb, b.radius, margin)
    if a.kind == ShapeKind.SPHERE and b.kind == ShapeKind.BOX:
        return _sphere_box(ca, a.radius, b, cb, yaw_b, margin)
    if a.kind == ShapeKind.BOX and b.kind == ShapeKind.SPHERE:
        return _sphere_box(cb, b.radius, a, ca, yaw_a, margin)
    if a.kind == ShapeKind.BOX and b.kind == ShapeKind.BOX:
        return _box_box(a, ca, yaw_a, b, cb, yaw_b, margin)
    raise ContractViolation(f"unsupported shape pair {a.kind} / {b.kind}")


def shapes_intersect(a: CollisionShape, pose_a: Pose, b: CollisionShape, pose_b: Pose, margin: float = 0.0) -> bool:
    """Exact sphere/sphere, sphere/box and SAT box/box test; touching counts as free"""
    ca = np.asarray(pose_a.center, dtype=float)[None, :]
    cb = np.asarray(pose_b.center, dtype=float)[None, :]
    hit = _intersect(a, ca, np.array([pose_a.yaw]), b, cb, np.array([pose_b.yaw]), margin)
    return bool(hit[0])


def aabb_overlap(a_lower, a_upper, b_lower, b_upper, margin: float = 0.0) -> bool:
    return not (np.any(a_upper + margin < b_lower) or np.any(b_upper + margin < a_lower))


# --- environment checks -----------------------------------------------------------

def steps_free(ws: Workspace, swept: SweptShape) -> np.ndarray:
    """Per step: inside the workspace and clear of every obstacle"""
    free = np.ones(swept.steps, dtype=bool)
    for shape, centers, yaw in swept.parts:
        ext = shape.extents(yaw, ws.dim)
        free &= np.all(centers - ext >= ws.lower, axis=1) & np.all(centers + ext <= ws.upper, axis=1)
    for obstacle in ws.obstacles_near(swept.lower, swept.upper):
        oc = np.broadcast_to(obstacle.center, (swept.steps, ws.dim))
        oyaw = np.full(swept.steps, obstacle.yaw)
        for shape, centers, yaw in swept.parts:
            free &= ~_intersect(shape, centers, yaw, obstacle.shape, oc, oyaw, 0.0)
    return free


def state_free(ws: Workspace, shape: RobotShape, x) -> bool:
    """Shape at pose(x) is inside the workspace and touches no obstacle"""
    return bool(steps_free(ws, shape.sweep(np.asarray(x, dtype=float)[None, :]))[0])


def first_blocked_step(ws: Workspace, swept: SweptShape) -> Optional[int]:
    free = steps_free(ws, swept)
    blocked = np.flatnonzero(~free)
    return int(blocked[0]) if len(blocked) else None


def motion_free(ws: Workspace, shape: RobotShape, motion) -> bool:
    """state_free at every step index; accepts a state array or anything with .swept"""
    swept = motion.swept if hasattr(motion, "swept") else shape.sweep(motion)
    return first_blocked_step(ws, swept) is None


# --- robot-robot checks -----------------------------------------------------------

def _as_swept(motion) -> SweptShape:
    return motion.swept if hasattr(motion, "swept") else motion


def colliding_steps(a: SweptShape, b: SweptShape, margin: float = 0.0) -> np.ndarray:
    """Boolean per shared step index"""
    if a.steps != b.steps:
        raise ContractViolation(f"horizon mismatch: {a.steps} vs {b.steps} states")
    hit = np.zeros(a.steps, dtype=bool)
    for shape_a, ca, ya in a.parts:
        for shape_b, cb, yb in b.parts:
            hit |= _intersect(shape_a, ca, ya, shape_b, cb, yb, margin)
    return hit


def motions_collide(m1, m2, margin: float = 0.0) -> bool:
    """Time-synchronised collision between two rolled motions"""
    a, b = _as_swept(m1), _as_swept(m2)
    if a.steps != b.steps:
        raise ContractViolation(f"horizon mismatch: {a.steps} vs {b.steps} states")
    if not aabb_overlap(a.lower, a.upper, b.lower, b.upper, margin):
        return False
    return bool(np.any(colliding_steps(a, b, margin)))


class MotionGrid:
    """Uniform-grid broadphase over motion bounding boxes"""

    def __init__(self, cell_size: float = 1.0):
        if not cell_size > 0:
            raise ContractViolation("grid cell size must be positive")
        self.cell_size = cell_size
        self._cells: Dict[Tuple[int, ...], Set[Hashable]] = defaultdict(set)
        self._boxes: Dict[Hashable, Tuple[np.ndarray, np.ndarray]] = {}

    def _cell_range(self, lower: np.ndarray, upper: np.ndarray) -> Iterable[Tuple[int, ...]]:
        lo = np.floor(lower / self.cell_size).astype(int)
        hi = np.floor(upper / self.cell_size).astype(int)
        ranges = [range(a, b + 1) for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, len(ranges))
        return [tuple(cell) for cell in grid]

    def insert(self, key: Hashable, swept: SweptShape, margin: float = 0.0):
        lower, upper = swept.lower - margin, swept.upper + margin
        self._boxes[key] = (lower, upper)
        for cell in self._cell_range(lower, upper):
            self._cells[cell].add(key)

    def remove(self, key: Hashable):
        lower, upper = self._boxes.pop(key)
        for cell in self._cell_range(lower, upper):
            self._cells[cell].discard(key)

    def query(self, swept: SweptShape) -> Set[Hashable]:
        """Keys whose boxes overlap the swept box"""
        found: Set[Hashable] = set()
        for cell in self._cell_range(swept.lower, swept.upper):
            found |= self._cells.get(cell, set())
        return {k for k in found if aabb_overlap(swept.lower, swept.upper, *self._boxes[k])}

    def __len__(self):
        return len(self._boxes)
