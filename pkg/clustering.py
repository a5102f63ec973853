"""
Motion clustering for the per-robot candidate lists
Goal-oriented clustering (GOC) bands motions by cost-to-go, space-cover clustering
(SC-GOC) groups them by final-state proximity. Element selection and the inside-out
ordering decide which members reach db-PIBT and in what order.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from errors import ContractViolation

logger = logging.getLogger(__name__)

WEIGHT_EPSILON = 1e-6

# GOC width fraction per dynamics model
DEFAULT_RHO = {
    "unicycle_1st": 0.05,
    "double_integrator_2d": 1.0,
    "double_integrator_3d": 1.0,
    "car_with_trailer": 1.0,
}

# metric(final_states (n, d), x (d,)) -> distances (n,)
BatchMetric = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ClusterMethod(str, Enum):
    GOC = "goc"
    SCGOC = "scgoc"
    NONE = "none"


class Selection(str, Enum):
    VANILLA = "vanilla"
    DETERMINISTIC = "det"
    WEIGHTED = "weighted"

    @classmethod
    def _missing_(cls, value):
        if value == "deterministic":
            return cls.DETERMINISTIC
        return None


@dataclass
class ClusterConfig:
    """Clustering knobs; rho=None means the per-model default"""
    method: ClusterMethod = ClusterMethod.GOC
    selection: Selection = Selection.DETERMINISTIC
    n: int = 5
    rho: Optional[float] = None
    tau: float = 1.0
    seed: Optional[int] = None

    def __post_init__(self):
        try:
            self.method = ClusterMethod(self.method)
            self.selection = Selection(self.selection)
        except ValueError as e:
            raise ContractViolation(f"invalid cluster configuration: {e}")
        if self.rho is not None and not 0.0 <= self.rho <= 1.0:
            raise ContractViolation(f"rho must lie in [0, 1], got {self.rho}")
        if not self.tau > 0:
            raise ContractViolation(f"tau must be positive, got {self.tau}")
        if self.n < 1:
            raise ContractViolation(f"n must be >= 1, got {self.n}")

    def rho_for(self, model_id) -> float:
        if self.rho is not None:
            return self.rho
        key = getattr(model_id, "value", model_id)
        return DEFAULT_RHO.get(key, 1.0)

    def to_metadata(self) -> Dict[str, Any]:
        return {
            "method": self.method.value,
            "selection": self.selection.value,
            "n": self.n,
            "rho": self.rho,
            "tau": self.tau,
            "seed": self.seed,
        }


@dataclass
class Cluster:
    """Members sorted by h; ref_h is h_l (GOC) or the reference motion's h (SC-GOC)"""
    members: List[Any] = field(default_factory=list)
    ref_h: float = 0.0

    def __len__(self):
        return len(self.members)


def _sorted_by_h(motions: Sequence[Any]) -> List[Any]:
    # stable: equal h keeps input order
    return sorted(motions, key=lambda m: m.h)


def goc_cluster(motions: Sequence[Any], rho: float) -> List[Cluster]:
    """Greedy h-band sweep with width iota = rho * (h_max - h_min)"""
    if not motions:
        return []
    ordered = _sorted_by_h(motions)
    finite = [m for m in ordered if math.isfinite(m.h)]
    unbounded = [m for m in ordered if not math.isfinite(m.h)]

    clusters: List[Cluster] = []
    if finite:
        iota = rho * (finite[-1].h - finite[0].h)
        start = 0
        while start < len(finite):
            h_l = finite[start].h
            end = start
            while end < len(finite) and abs(finite[end].h - h_l) <= iota:
                end += 1
            clusters.append(Cluster(members=finite[start:end], ref_h=h_l))
            start = end
    if unbounded:
        clusters.append(Cluster(members=unbounded, ref_h=math.inf))
    return clusters


def scgoc_cluster(motions: Sequence[Any], tau: float, metric: BatchMetric) -> List[Cluster]:
    """Repeatedly take the min-h motion as reference and claim everything within tau of it"""
    if not motions:
        return []
    remaining = _sorted_by_h(motions)
    finals = np.array([m.final_state for m in remaining], dtype=float)
    alive = np.ones(len(remaining), dtype=bool)

    clusters: List[Cluster] = []
    for ref_index in range(len(remaining)):
        if not alive[ref_index]:
            continue
        candidates = np.flatnonzero(alive)
        distances = metric(finals[candidates], finals[ref_index])
        claimed = candidates[distances <= tau]
        # the reference is always its own member, even under a degenerate metric
        if ref_index not in claimed:
            claimed = np.sort(np.append(claimed, ref_index))
        alive[claimed] = False
        clusters.append(Cluster(members=[remaining[i] for i in claimed], ref_h=remaining[ref_index].h))
    return clusters


def select_elements(cluster: Cluster, selection: Selection, n: int, rng: np.random.Generator) -> List[Any]:
    """Pick the members of one cluster that go forward"""
    members = cluster.members
    if selection == Selection.VANILLA:
        return list(members)
    if selection == Selection.DETERMINISTIC:
        return list(members[:n])

    weights = np.array([1.0 / (m.h + WEIGHT_EPSILON) if math.isfinite(m.h) else 0.0 for m in members])
    if not weights.any():
        weights = np.ones(len(members))
    # members with zero weight are never drawn
    k = min(n, int(np.count_nonzero(weights)))
    picks = rng.choice(len(members), size=k, replace=False, p=weights / weights.sum())
    return [members[i] for i in picks]


def inside_out_reorder(items: Sequence[Any]) -> List[Any]:
    """<m_c, m_c-1, m_c+1, m_c-2, ...> with c = ceil(n/2), 1-based"""
    n = len(items)
    if n == 0:
        return []
    center = math.ceil(n / 2)
    order = [center]
    offset = 1
    while len(order) < n:
        for index in (center - offset, center + offset):
            if 1 <= index <= n:
                order.append(index)
        offset += 1
    return [items[i - 1] for i in order]


def cluster_motions(motions: Sequence[Any], cfg: ClusterConfig, metric: BatchMetric,
                    rng: np.random.Generator, rho: Optional[float] = None,
                    method: Optional[ClusterMethod] = None) -> List[Any]:
    """
    Order one robot's candidate motions for db-PIBT.

    `method` overrides cfg.method (livelock recovery switches single robots to SC-GOC),
    `rho` overrides cfg.rho (callers pass the per-model default).
    """
    method = ClusterMethod(method) if method is not None else cfg.method
    if method == ClusterMethod.NONE:
        return _sorted_by_h(motions)

    if method == ClusterMethod.GOC:
        width = rho if rho is not None else (cfg.rho if cfg.rho is not None else 1.0)
        ordered: List[Any] = []
        for cluster in goc_cluster(motions, width):
            ordered.extend(select_elements(cluster, cfg.selection, cfg.n, rng))
        return ordered

    ordered = []
    for cluster in scgoc_cluster(motions, cfg.tau, metric):
        ordered.extend(inside_out_reorder(select_elements(cluster, cfg.selection, cfg.n, rng)))
    return ordered
