"""
Wall-clock accounting for the key planner components
(heuristic estimation, collision checks, clustering, rollout).
"""

import time
from collections import defaultdict
from contextlib import contextmanager
from typing import Dict, Iterator

HEURISTIC = "heuristic"
COLLISION_UNPLANNED = "collision_unplanned"
CLUSTERING = "clustering"
COLLISION_PLANNED = "collision_planned"
ROLLOUT = "rollout"

CATEGORIES = (HEURISTIC, COLLISION_UNPLANNED, CLUSTERING, COLLISION_PLANNED, ROLLOUT)


class ComponentTimer:
    """Accumulates seconds spent per named component"""

    def __init__(self):
        self.totals: Dict[str, float] = defaultdict(float)

    @contextmanager
    def section(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] += time.perf_counter() - start

    def as_dict(self) -> Dict[str, float]:
        """Seconds per category; every known category is present"""
        out = {name: 0.0 for name in CATEGORIES}
        out.update(self.totals)
        return out
