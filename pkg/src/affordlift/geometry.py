"""Pinhole camera math, depth/point-cloud conversion, and surface normals.

Conventions: integer pixel coordinates address pixel centers, (0, 0) is the
top-left pixel, u grows rightward and v downward.  The camera frame is
right-handed with +z pointing away from the camera into the scene, so any
visible point has z > 0.  Depth values are metric z (not ray length).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    BehindCamera,
    DegenerateNeighborhood,
    DegenerateProjection,
    DimensionMismatch,
    EmptyCloud,
    EmptyCrop,
    InsufficientNeighbors,
    NoValidDepth,
    OutOfBounds,
)

DEFAULT_HOLE_RADIUS = 5
DEFAULT_PROJECTION_DELTA = 0.05
DEFAULT_NORMAL_NEIGHBORS = 30


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )


@dataclass
class DepthImage:
    """Per-pixel metric depth; non-finite or <= 0 values mark invalid pixels."""

    values: np.ndarray  # (H, W) float32

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise DimensionMismatch(f"depth must be 2D, got shape {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.values) & (self.values > 0)


@dataclass
class PointCloud:
    """Camera-frame points; pixel_indices are flat row-major source pixels."""

    points: np.ndarray  # (N, 3) float64
    pixel_indices: np.ndarray | None = None  # (N,) int64

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("cloud contains non-finite coordinates")
        if self.pixel_indices is not None:
            self.pixel_indices = np.asarray(self.pixel_indices, dtype=np.int64).reshape(-1)
            if self.pixel_indices.shape[0] != self.points.shape[0]:
                raise DimensionMismatch("pixel_indices length disagrees with point count")
            if len(np.unique(self.pixel_indices)) != len(self.pixel_indices):
                raise ValueError("pixel_indices must be unique")

    def __len__(self) -> int:
        return self.points.shape[0]


def unit(v: np.ndarray) -> np.ndarray:
    """Normalize a vector; raises on (near-)zero input."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def nearest_pixel(u: float, v: float, width: int, height: int) -> tuple[int, int]:
    """Round continuous image coordinates to the nearest pixel center.

    The image footprint is [-0.5, width - 0.5) x [-0.5, height - 0.5);
    coordinates outside it raise OutOfBounds.
    """
    pu = int(np.floor(u + 0.5))
    pv = int(np.floor(v + 0.5))
    if not (0 <= pu < width and 0 <= pv < height):
        raise OutOfBounds(f"pixel ({u}, {v}) outside {width}x{height} image")
    return pu, pv


def back_project(
    u: float,
    v: float,
    depth: DepthImage,
    intrinsics: CameraIntrinsics,
    window_radius: int = DEFAULT_HOLE_RADIUS,
) -> tuple[np.ndarray, tuple[int, int]]:
    """Back-project a pixel to 3D, tolerating depth holes.

    The depth z is read from the nearest valid pixel inside a
    (2*window_radius + 1)^2 window around (u, v) (ties broken in row-major
    order); x and y still follow the requested ray, so projecting the result
    returns exactly (u, v).

    Returns:
        (point, (pu, pv)): the 3D point and the pixel that supplied z.
    """
    if depth.width != intrinsics.width or depth.height != intrinsics.height:
        raise DimensionMismatch(
            f"depth {depth.width}x{depth.height} vs intrinsics "
            f"{intrinsics.width}x{intrinsics.height}"
        )
    pu, pv = nearest_pixel(u, v, depth.width, depth.height)

    u0 = max(pu - window_radius, 0)
    u1 = min(pu + window_radius, depth.width - 1)
    v0 = max(pv - window_radius, 0)
    v1 = min(pv + window_radius, depth.height - 1)
    window = depth.values[v0 : v1 + 1, u0 : u1 + 1]
    valid = np.isfinite(window) & (window > 0)
    if not valid.any():
        raise NoValidDepth(
            f"no valid depth within {window_radius} px of ({pu}, {pv})"
        )
    vv, uu = np.nonzero(valid)
    d2 = (vv + v0 - pv) ** 2 + (uu + u0 - pu) ** 2
    # np.nonzero scans row-major, so a stable sort on d2 keeps row-major ties.
    best = np.argsort(d2, kind="stable")[0]
    su, sv = int(uu[best] + u0), int(vv[best] + v0)
    z = float(depth.values[sv, su])

    x = (u - intrinsics.cx) * z / intrinsics.fx
    y = (v - intrinsics.cy) * z / intrinsics.fy
    return np.array([x, y, z], dtype=np.float64), (su, sv)


def project(point: np.ndarray, intrinsics: CameraIntrinsics) -> tuple[float, float]:
    """Project a camera-frame 3D point to continuous pixel coordinates."""
    x, y, z = (float(c) for c in np.asarray(point, dtype=np.float64))
    if z <= 0:
        raise BehindCamera(f"cannot project point with z={z}")
    u = intrinsics.fx * x / z + intrinsics.cx
    v = intrinsics.fy * y / z + intrinsics.cy
    return u, v


def project_direction(
    origin: np.ndarray,
    direction: np.ndarray,
    intrinsics: CameraIntrinsics,
    delta: float = DEFAULT_PROJECTION_DELTA,
) -> np.ndarray:
    """Project a 3D direction at a scene point into a unit 2D image direction.

    Computed as the normalized displacement between the projections of
    origin and origin + delta * direction.  Directions (anti)parallel to
    the optical axis displace the projection by ~0 px and raise
    DegenerateProjection.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    u0, v0 = project(origin, intrinsics)
    u1, v1 = project(origin + delta * direction, intrinsics)
    disp = np.array([u1 - u0, v1 - v0], dtype=np.float64)
    norm = float(np.linalg.norm(disp))
    if norm < 1e-9:
        raise DegenerateProjection(
            "direction is parallel to the optical axis (projects to a point)"
        )
    return disp / norm


def depth_to_cloud(
    depth: DepthImage,
    intrinsics: CameraIntrinsics,
    mask: np.ndarray | None = None,
) -> PointCloud:
    """Back-project every valid (optionally masked) pixel at its own depth."""
    if depth.width != intrinsics.width or depth.height != intrinsics.height:
        raise DimensionMismatch(
            f"depth {depth.width}x{depth.height} vs intrinsics "
            f"{intrinsics.width}x{intrinsics.height}"
        )
    keep = depth.valid_mask()
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != depth.values.shape:
            raise DimensionMismatch(
                f"mask shape {mask.shape} vs depth {depth.values.shape}"
            )
        keep = keep & mask
    if not keep.any():
        raise EmptyCloud("no valid depth pixel to back-project")

    vs, us = np.nonzero(keep)
    zs = depth.values[vs, us].astype(np.float64)
    xs = (us - intrinsics.cx) * zs / intrinsics.fx
    ys = (vs - intrinsics.cy) * zs / intrinsics.fy
    points = np.column_stack([xs, ys, zs])
    flat = vs.astype(np.int64) * depth.width + us.astype(np.int64)
    return PointCloud(points=points, pixel_indices=flat)


def crop_cloud(cloud: PointCloud, center: np.ndarray, radius: float) -> PointCloud:
    """Keep exactly the points within `radius` of `center`, order preserved."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    center = np.asarray(center, dtype=np.float64)
    keep = np.linalg.norm(cloud.points - center, axis=1) <= radius
    if not keep.any():
        raise EmptyCrop(f"no point within {radius} m of {center.tolist()}")
    idx = cloud.pixel_indices[keep] if cloud.pixel_indices is not None else None
    return PointCloud(points=cloud.points[keep], pixel_indices=idx)


def estimate_normals(
    cloud: PointCloud,
    k: int = DEFAULT_NORMAL_NEIGHBORS,
    view_origin: np.ndarray = (0.0, 0.0, 0.0),
) -> np.ndarray:
    """Estimate a unit normal per point from its k-nearest-neighbor patch.

    For each point the covariance of the point plus its k nearest neighbors
    is eigendecomposed; the normal is the eigenvector of the smallest
    eigenvalue, sign-flipped to face `view_origin` (the camera).

    Returns:
        (N, 3) float64 array of unit normals, aligned with cloud order.
    """
    if k < 3:
        raise ValueError(f"k must be >= 3, got {k}")
    n = len(cloud)
    if n < k + 1:
        raise InsufficientNeighbors(f"cloud has {n} points, need at least {k + 1}")
    view_origin = np.asarray(view_origin, dtype=np.float64)

    tree = cKDTree(cloud.points)
    _, idx = tree.query(cloud.points, k=k + 1)
    patches = cloud.points[idx]  # (N, k+1, 3)
    centered = patches - patches.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k + 1)

    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending eigenvalues
    # Rank < 2 means the middle eigenvalue vanishes: the patch is a line
    # (or a single repeated point) and has no unique normal.
    scale = eigvals[:, 2]
    degenerate = (scale <= 0) | (eigvals[:, 1] <= 1e-12 * np.maximum(scale, 1e-300))
    if degenerate.any():
        raise DegenerateNeighborhood(
            f"{int(degenerate.sum())} neighborhood(s) have rank < 2 covariance"
        )

    normals = eigvecs[:, :, 0]
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    flip = np.einsum("ni,ni->n", normals, view_origin - cloud.points) < 0
    normals[flip] *= -1.0
    return normals
