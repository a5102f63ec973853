#!/usr/bin/env python3
"""
Planner configuration and logging setup
Every knob of the planner lives in one dataclass tree; .env / DBLACAM_* variables
provide defaults for the command line, explicit flags override them.
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from clustering import ClusterConfig
from errors import ContractViolation

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

PLANNERS = ("dblacam", "dbpibt")
HEURISTICS = ("hest", "reverse-grid-only")


@dataclass
class PrimitiveConfig:
    """How primitive sets are generated (or where they are loaded from)"""
    count: int = 300
    horizon: int = 20
    dt: float = 0.1
    seed: int = 0
    stay_bins: int = 8
    directory: Optional[str] = None

    def __post_init__(self):
        if self.count <= 0 or self.horizon <= 0:
            raise ContractViolation("primitive count and horizon must be positive")
        if self.dt <= 0:
            raise ContractViolation("dt must be positive")


@dataclass
class PlannerConfig:
    """Configuration for db-LaCAM / standalone db-PIBT"""
    planner: str = "dblacam"
    alpha: float = 1.0
    delta: float = 0.5
    delta_g: float = 0.3
    lookup_threshold: float = 1.0
    heuristic: str = "hest"
    grid_resolution: float = 0.25
    est_budget: int = 2000
    est_inflation: float = 2.0
    est_density_radius: float = 0.5
    reverse_margin: float = 0.5
    livelock: bool = True
    livelock_window: int = 5
    livelock_alternations: int = 3
    explored_res_linear: Optional[float] = None
    explored_res_angle: float = math.pi / 8
    timelimit: float = 60.0
    max_nodes: Optional[int] = None
    seed: int = 0
    margin: float = 0.0
    max_horizons: int = 500
    incremental_primitives: bool = False
    incremental_step: int = 100
    incremental_rounds: int = 5
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    primitives: PrimitiveConfig = field(default_factory=PrimitiveConfig)

    def __post_init__(self):
        if isinstance(self.cluster, dict):
            self.cluster = ClusterConfig(**self.cluster)
        if isinstance(self.primitives, dict):
            self.primitives = PrimitiveConfig(**self.primitives)
        if self.planner not in PLANNERS:
            raise ContractViolation(f"unknown planner {self.planner!r}, expected one of {PLANNERS}")
        if self.heuristic not in HEURISTICS:
            raise ContractViolation(f"unknown heuristic {self.heuristic!r}, expected one of {HEURISTICS}")
        if self.alpha < 0 or self.delta < 0 or self.delta_g < 0:
            raise ContractViolation("alpha, delta and delta_g must be non-negative")
        if self.lookup_threshold < 0:
            raise ContractViolation("lookup threshold must be non-negative")
        if self.livelock_window < 2 or self.livelock_alternations < 1:
            raise ContractViolation("livelock window must be >= 2 and alternations >= 1")
        if self.explored_res_angle <= 0:
            raise ContractViolation("explored angle resolution must be positive")
        if self.explored_res_linear is not None and self.explored_res_linear <= 0:
            raise ContractViolation("explored linear resolution must be positive")

    @property
    def alpha_delta(self) -> float:
        return self.alpha * self.delta

    @property
    def linear_resolution(self) -> float:
        if self.explored_res_linear is not None:
            return self.explored_res_linear
        # delta = 0 would make the Explored table infinite
        return self.delta / 2 if self.delta > 0 else 0.25

    def with_overrides(self, **changes) -> "PlannerConfig":
        return replace(self, **changes)

    def to_metadata(self) -> Dict[str, Any]:
        """JSON-compatible snapshot stored with every solution"""
        data = asdict(self)
        data["cluster"] = self.cluster.to_metadata()
        data["alpha_delta"] = self.alpha_delta
        data["explored_res_linear"] = self.linear_resolution
        return data

    @classmethod
    def from_env(cls, env_file: Optional[str] = None, **overrides) -> "PlannerConfig":
        """Defaults from .env / DBLACAM_* variables, then explicit overrides"""
        if env_file:
            load_dotenv(env_file)
        else:
            load_dotenv()

        env_values: Dict[str, Any] = {}
        readers = {
            "DBLACAM_PLANNER": ("planner", str),
            "DBLACAM_TIMELIMIT": ("timelimit", float),
            "DBLACAM_SEED": ("seed", int),
            "DBLACAM_HEURISTIC": ("heuristic", str),
            "DBLACAM_DELTA": ("delta", float),
            "DBLACAM_ALPHA": ("alpha", float),
            "DBLACAM_DELTA_G": ("delta_g", float),
            "DBLACAM_EST_BUDGET": ("est_budget", int),
        }
        for var, (name, cast) in readers.items():
            raw = os.getenv(var)
            if raw is None or raw == "":
                continue
            try:
                env_values[name] = cast(raw)
            except ValueError:
                logger.warning(f"Ignoring {var}={raw!r}: not a valid {cast.__name__}")

        cluster_env = {}
        if os.getenv("DBLACAM_CLUSTER"):
            cluster_env["method"] = os.getenv("DBLACAM_CLUSTER")
        if os.getenv("DBLACAM_SELECTION"):
            cluster_env["selection"] = os.getenv("DBLACAM_SELECTION")
        if cluster_env and "cluster" not in overrides:
            env_values["cluster"] = ClusterConfig(**cluster_env)

        primitive_env = {}
        if os.getenv("DBLACAM_PRIMITIVE_COUNT"):
            primitive_env["count"] = int(os.getenv("DBLACAM_PRIMITIVE_COUNT"))
        if os.getenv("DBLACAM_PRIMITIVE_DIR"):
            primitive_env["directory"] = os.getenv("DBLACAM_PRIMITIVE_DIR")
        if primitive_env and "primitives" not in overrides:
            env_values["primitives"] = PrimitiveConfig(**primitive_env)

        env_values.update(overrides)
        return cls(**env_values)


def setup_logging(level: str = "INFO", log_dir: Optional[str] = None):
    """Configure root logging: console always, monthly file + error file when log_dir is set"""
    level_value = getattr(logging, str(level).upper(), logging.INFO)
    formatter = logging.Formatter(LOG_FORMAT)

    root = logging.getLogger()
    root.setLevel(level_value)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    root.addHandler(console_handler)

    if log_dir:
        log_folder = Path(log_dir)
        log_folder.mkdir(parents=True, exist_ok=True)

        file_handler = logging.FileHandler(
            log_folder / f"dblacam_{datetime.now().strftime('%Y%m')}.log"
        )
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

        error_handler = logging.FileHandler(
            log_folder / f"errors_{datetime.now().strftime('%Y%m')}.log"
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(formatter)
        root.addHandler(error_handler)

    logger.debug(f"Logging configured at {logging.getLevelName(level_value)}")
