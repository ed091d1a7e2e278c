"""Retrieve-and-transfer visual affordance pipeline.

Given a memory of 2D demonstrations and a target RGBD observation (depth,
masks, dense feature maps, embeddings), the pipeline retrieves the most
similar demonstration, transfers its waypoints through dense-feature
correspondence, and lifts the result to a 3D contact point and
post-contact direction.
"""

from . import errors
from .config import PipelineConfig
from .features import (
    DenseFeatureMap,
    Embedding,
    PixelMask,
    best_match,
    cosine,
    normalize_features,
    sample_feature,
)
from .geometry import (
    CameraIntrinsics,
    DepthImage,
    PointCloud,
    back_project,
    crop_cloud,
    depth_to_cloud,
    estimate_normals,
    project,
    project_direction,
)
from .lifting import (
    Affordance3D,
    GraspCandidate,
    LiftParams,
    cluster_normals,
    lift_affordance,
    lift_contact,
    select_direction,
    select_grasp,
)
from .memory import (
    AffordanceEntry,
    AffordanceMemory,
    ingest_custom,
    ingest_hoi,
    ingest_robotic,
    load_memory,
    save_memory,
)
from .retrieval import (
    RetrievalQuery,
    RetrievalResult,
    geometric_retrieve,
    imd,
    retrieve,
    retrieve_task,
    semantic_filter,
)
from .synth import Affine2D, FaceSpec, make_box_scene, make_coordinate_features, make_plane_scene
from .transfer import Affordance2D, TransferParams, ransac_line, transfer_affordance, transfer_waypoints

__version__ = "0.1.0"

__all__ = [
    "Affine2D",
    "Affordance2D",
    "Affordance3D",
    "AffordanceEntry",
    "AffordanceMemory",
    "CameraIntrinsics",
    "DenseFeatureMap",
    "DepthImage",
    "Embedding",
    "FaceSpec",
    "GraspCandidate",
    "LiftParams",
    "PipelineConfig",
    "PixelMask",
    "PointCloud",
    "RetrievalQuery",
    "RetrievalResult",
    "TransferParams",
    "back_project",
    "best_match",
    "cluster_normals",
    "cosine",
    "crop_cloud",
    "depth_to_cloud",
    "errors",
    "estimate_normals",
    "geometric_retrieve",
    "imd",
    "ingest_custom",
    "ingest_hoi",
    "ingest_robotic",
    "lift_affordance",
    "lift_contact",
    "load_memory",
    "make_box_scene",
    "make_coordinate_features",
    "make_plane_scene",
    "normalize_features",
    "project",
    "project_direction",
    "ransac_line",
    "retrieve",
    "retrieve_task",
    "sample_feature",
    "save_memory",
    "select_direction",
    "select_grasp",
    "semantic_filter",
    "transfer_affordance",
    "transfer_waypoints",
]
