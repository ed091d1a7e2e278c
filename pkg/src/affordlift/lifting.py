"""Sampling-based 2D->3D affordance lifting and grasp selection.

The 2D contact pixel is back-projected through the depth map, the local
point cloud around it is cropped, per-point surface normals are estimated
and clustered with K-Means, and the cluster center (or its negation) whose
image projection best aligns with the 2D post-contact direction becomes
the 3D direction.  Clusters are surface normals while the output is a
motion direction, hence the explicit +/- evaluation: an opening motion
is parallel to the outward face normal, a closing one anti-parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousDirection,
    BehindCamera,
    DegenerateProjection,
    NoGraspCandidates,
    PipelineError,
)
from .geometry import (
    CameraIntrinsics,
    DepthImage,
    back_project,
    crop_cloud,
    depth_to_cloud,
    estimate_normals,
    project_direction,
    unit,
)
from .transfer import Affordance2D


@dataclass(frozen=True)
class LiftParams:
    """Knobs for the lifting chain, sized for handle-scale tabletop geometry."""

    crop_radius: float = 0.10  # m
    k_neighbors: int = 30
    k_clusters: int = 4
    delta_proj: float = 0.05  # m
    hole_window: int = 11  # px, full window width for depth-hole search

    def __post_init__(self) -> None:
        if min(self.crop_radius, self.k_neighbors, self.k_clusters,
               self.delta_proj, self.hole_window) <= 0:
            raise ValueError("all lifting parameters must be positive")


@dataclass
class ClusterDiagnostic:
    center: np.ndarray  # (3,) unit
    member_count: int
    projected_angle: float | None  # rad, min over +/- center; None if degenerate


@dataclass
class Affordance3D:
    """Executable 3D affordance: contact point + unit post-contact direction."""

    contact: np.ndarray  # (3,) float64, contact.z > 0
    direction: np.ndarray  # (3,) float64, unit
    clusters: list[ClusterDiagnostic] = field(default_factory=list)
    contact_pixel: tuple[int, int] | None = None  # depth pixel that supplied z

    def __post_init__(self) -> None:
        self.contact = np.asarray(self.contact, dtype=np.float64).reshape(3)
        self.direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if self.contact[2] <= 0:
            raise ValueError(f"contact must have z > 0, got {self.contact}")
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-6:
            raise ValueError(f"direction must be unit, got {self.direction}")

    def to_json_dict(self) -> dict:
        return {
            "contact": [float(x) for x in self.contact],
            "direction": [float(x) for x in self.direction],
            "clusters": [
                {
                    "center": [float(x) for x in c.center],
                    "count": c.member_count,
                    "angle": None if c.projected_angle is None else float(c.projected_angle),
                }
                for c in self.clusters
            ],
        }


@dataclass
class GraspCandidate:
    """Externally generated grasp proposal."""

    position: np.ndarray  # (3,)
    quaternion: np.ndarray  # (4,), unit
    score: float

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.quaternion = np.asarray(self.quaternion, dtype=np.float64).reshape(4)
        if abs(np.linalg.norm(self.quaternion) - 1.0) > 1e-6:
            raise ValueError(f"quaternion must be unit, got {self.quaternion}")


def lift_contact(
    a2d: Affordance2D,
    depth: DepthImage,
    intrinsics: CameraIntrinsics,
    params: LiftParams = LiftParams(),
) -> tuple[np.ndarray, tuple[int, int]]:
    """Back-project the 2D contact pixel, searching the hole window for depth."""
    u, v = a2d.contact
    return back_project(u, v, depth, intrinsics, window_radius=params.hole_window // 2)


def cluster_normals(
    normals: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
) -> list[tuple[np.ndarray, int]]:
    """Cluster unit normals with seeded k-means++ / Lloyd iterations.

    Inputs are canonically sorted (lexicographically by components) before
    seeding so the result depends only on the multiset of normals and the
    seed, not their order.  Empty clusters are dropped, returned centers
    are re-normalized to unit length, k is clamped to the number of
    distinct normals, and clusters come back sorted by descending member
    count (ties by center components).
    """
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    if normals.shape[0] == 0:
        raise ValueError("need at least one normal")
    n_distinct = np.unique(normals, axis=0).shape[0]
    k = max(1, min(k, n_distinct))

    order = np.lexsort((normals[:, 2], normals[:, 1], normals[:, 0]))
    data = normals[order]
    n = data.shape[0]
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = [data[int(rng.integers(n))]]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    while len(centers) < k:
        total = float(d2.sum())
        if total <= 0.0:
            break  # fewer effective centers than k (duplicate points)
        probs = d2 / total
        centers.append(data[int(rng.choice(n, p=probs))])
        d2 = np.minimum(d2, np.sum((data - centers[-1]) ** 2, axis=1))
    centers = np.asarray(centers, dtype=np.float64)

    assignment = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = np.sum((data[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assignment = np.argmin(dists, axis=1)
        new_centers = []
        for c in range(centers.shape[0]):
            members = data[new_assignment == c]
            if members.shape[0] > 0:
                new_centers.append(members.mean(axis=0))
        new_centers = np.asarray(new_centers, dtype=np.float64)
        if new_centers.shape[0] != centers.shape[0]:
            centers = new_centers
            continue  # dropped an empty cluster; re-assign
        if np.array_equal(new_assignment, assignment) and np.allclose(
            new_centers, centers
        ):
            break
        assignment, centers = new_assignment, new_centers

    dists = np.sum((data[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    assignment = np.argmin(dists, axis=1)
    clusters = []
    for c in range(centers.shape[0]):
        count = int((assignment == c).sum())
        if count == 0:
            continue
        norm = float(np.linalg.norm(centers[c]))
        if norm < 1e-12:
            continue  # antipodal members cancelled out; no usable center
        clusters.append((centers[c] / norm, count))
    clusters.sort(key=lambda cc: (-cc[1], tuple(cc[0])))
    return clusters


def select_direction(
    clusters: list[tuple[np.ndarray, int]],
    tau2d: np.ndarray,
    contact3d: np.ndarray,
    intrinsics: CameraIntrinsics,
    delta: float,
) -> tuple[np.ndarray, list[ClusterDiagnostic]]:
    """Pick the signed cluster center whose projection best matches tau2d.

    Both +n and -n are evaluated for every center (the motion direction's
    sign relative to the surface normal is ambiguous); candidates whose
    projection is degenerate (parallel to the optical axis or behind the
    camera) are skipped.  Ties break toward the larger member count, then
    cluster order, then the + sign.
    """
    if not clusters:
        raise AmbiguousDirection("no cluster centers to select from")
    tau2d = unit(tau2d)
    contact3d = np.asarray(contact3d, dtype=np.float64)

    best_key: tuple | None = None
    best_vec: np.ndarray | None = None
    diagnostics: list[ClusterDiagnostic] = []
    for idx, (center, count) in enumerate(clusters):
        min_angle: float | None = None
        for sign_rank, sign in enumerate((1.0, -1.0)):
            cand = sign * center
            try:
                proj = project_direction(contact3d, cand, intrinsics, delta)
            except (DegenerateProjection, BehindCamera):
                continue
            angle = math.acos(min(1.0, max(-1.0, float(np.dot(proj, tau2d)))))
            if min_angle is None or angle < min_angle:
                min_angle = angle
            key = (angle, -count, idx, sign_rank)
            if best_key is None or key < best_key:
                best_key = key
                best_vec = cand
        diagnostics.append(
            ClusterDiagnostic(center=center, member_count=count, projected_angle=min_angle)
        )
    if best_vec is None:
        raise AmbiguousDirection(
            "every cluster center projects degenerately; cannot pick a direction"
        )
    return best_vec, diagnostics


def lift_affordance(
    a2d: Affordance2D,
    depth: DepthImage,
    intrinsics: CameraIntrinsics,
    params: LiftParams = LiftParams(),
    seed: int = 0,
) -> Affordance3D:
    """Run the full lifting chain; stage errors gain a ``stage`` attribute."""
    def staged(stage, fn):
        try:
            return fn()
        except PipelineError as exc:
            raise exc.annotate(f"lifting/{stage}")

    contact, used_pixel = staged(
        "contact", lambda: lift_contact(a2d, depth, intrinsics, params)
    )
    cloud = staged("cloud", lambda: depth_to_cloud(depth, intrinsics))
    local = staged("crop", lambda: crop_cloud(cloud, contact, params.crop_radius))
    normals = staged(
        "normals", lambda: estimate_normals(local, k=params.k_neighbors)
    )
    clusters = cluster_normals(normals, k=params.k_clusters, seed=seed)
    direction, diagnostics = staged(
        "direction",
        lambda: select_direction(
            clusters, a2d.direction, contact, intrinsics, params.delta_proj
        ),
    )
    return Affordance3D(
        contact=contact,
        direction=direction,
        clusters=diagnostics,
        contact_pixel=used_pixel,
    )


def select_grasp(
    candidates: list[GraspCandidate], contact3d: np.ndarray
) -> GraspCandidate:
    """Pick the candidate closest to the 3D contact (ties: higher score, order)."""
    if not candidates:
        raise NoGraspCandidates("no grasp candidates supplied")
    contact3d = np.asarray(contact3d, dtype=np.float64)
    best = min(
        enumerate(candidates),
        key=lambda ic: (
            float(np.linalg.norm(ic[1].position - contact3d)),
            -ic[1].score,
            ic[0],
        ),
    )
    return best[1]
