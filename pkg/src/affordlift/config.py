"""Pipeline configuration: every tunable constant in one serializable place.

`config init` on the CLI emits the full defaults as JSON so an experiment
is reproducible from the config file alone.  Values not present in a
loaded file keep their defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .lifting import LiftParams
from .transfer import TransferParams


@dataclass
class PipelineConfig:
    # retrieval
    task_top_k: int = 1
    semantic_threshold: float = 0.5
    task_warn_distance: float = 0.5
    # 2D transfer
    score_floor: float = 0.3
    ransac_iterations: int = 256
    ransac_inlier_tol: float = 3.0
    ransac_seed: int = 0
    # 3D lifting
    crop_radius: float = 0.10
    k_neighbors: int = 30
    k_clusters: int = 4
    delta_proj: float = 0.05
    hole_window: int = 11
    kmeans_seed: int = 0

    def __post_init__(self) -> None:
        if self.task_top_k < 1:
            raise ValueError("task_top_k must be >= 1")
        if self.ransac_iterations < 1 or self.ransac_inlier_tol <= 0:
            raise ValueError("invalid RANSAC parameters")
        if not 0.0 <= self.score_floor <= 1.0:
            raise ValueError("score_floor must lie in [0, 1]")
        # LiftParams re-validates the geometric knobs
        self.lift_params()

    def lift_params(self) -> LiftParams:
        return LiftParams(
            crop_radius=self.crop_radius,
            k_neighbors=self.k_neighbors,
            k_clusters=self.k_clusters,
            delta_proj=self.delta_proj,
            hole_window=self.hole_window,
        )

    def transfer_params(self) -> TransferParams:
        return TransferParams(
            score_floor=self.score_floor,
            ransac_iterations=self.ransac_iterations,
            ransac_inlier_tol=self.ransac_inlier_tol,
            ransac_seed=self.ransac_seed,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        doc = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | None) -> "PipelineConfig":
        if path is None:
            return cls()
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())
