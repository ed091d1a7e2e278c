"""Deterministic synthetic scenes and feature maps with analytic ground truth.

Everything here exists to make the numeric pipeline testable: planes and
box fronts whose depth and normals are known in closed form, and
coordinate-encoded feature-map pairs whose nearest-neighbor matches recover
a known warp exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonInvertibleWarp, PlaneNotVisible
from .features import DenseFeatureMap, PixelMask
from .geometry import CameraIntrinsics, DepthImage, unit


@dataclass(frozen=True)
class Affine2D:
    """2D affine map y = A @ [x; 1] with A a 2x3 matrix."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64).reshape(2, 3)
        object.__setattr__(self, "matrix", m)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        squeeze = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = pts @ self.matrix[:, :2].T + self.matrix[:, 2]
        return out[0] if squeeze else out

    def inverse(self) -> "Affine2D":
        lin = self.matrix[:, :2]
        det = float(np.linalg.det(lin))
        if abs(det) < 1e-12:
            raise NonInvertibleWarp(f"affine warp has determinant {det}")
        inv = np.linalg.inv(lin)
        return Affine2D(np.column_stack([inv, -inv @ self.matrix[:, 2]]))

    @classmethod
    def identity(cls) -> "Affine2D":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Affine2D":
        return cls(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy]]))

    @classmethod
    def similarity(cls, angle: float, scale: float, center: tuple[float, float]) -> "Affine2D":
        """Rotation by `angle` (radians) and uniform `scale` about `center`."""
        c, s = np.cos(angle) * scale, np.sin(angle) * scale
        cx, cy = center
        return cls(
            np.array(
                [
                    [c, -s, cx - c * cx + s * cy],
                    [s, c, cy - s * cx - c * cy],
                ]
            )
        )


@dataclass
class FaceSpec:
    """One planar face patch: a camera-facing plane filled into a pixel rect.

    The plane passes through -normal * distance (i.e. n . p = -distance),
    so a fronto-parallel face with normal (0, 0, -1) at distance 2 renders
    constant depth 2.  rect is (u0, v0, u1, v1), inclusive pixel bounds.
    """

    name: str
    normal: np.ndarray
    distance: float
    rect: tuple[int, int, int, int]


@dataclass
class SyntheticScene:
    depth: DepthImage
    intrinsics: CameraIntrinsics
    analytic_normals: np.ndarray  # (H, W, 3) float64
    face_masks: dict[str, PixelMask] = field(default_factory=dict)
    ground_truth: dict[str, np.ndarray] = field(default_factory=dict)


def _pixel_rays(intrinsics: CameraIntrinsics) -> np.ndarray:
    us = np.arange(intrinsics.width, dtype=np.float64)
    vs = np.arange(intrinsics.height, dtype=np.float64)
    rx = (us - intrinsics.cx) / intrinsics.fx
    ry = (vs - intrinsics.cy) / intrinsics.fy
    rays = np.empty((intrinsics.height, intrinsics.width, 3), dtype=np.float64)
    rays[:, :, 0] = rx[None, :]
    rays[:, :, 1] = ry[:, None]
    rays[:, :, 2] = 1.0
    return rays


def _plane_depth(
    normal: np.ndarray,
    distance: float,
    rays: np.ndarray,
    where: str,
) -> np.ndarray:
    """z(u, v) for the plane n . p = -distance, requiring visibility."""
    ndotr = rays @ normal
    if np.any(ndotr >= -1e-12):
        raise PlaneNotVisible(f"{where}: plane is back-facing or edge-on in view")
    return distance / (-ndotr)


def make_plane_scene(
    normal: np.ndarray,
    distance: float,
    intrinsics: CameraIntrinsics,
    noise: float = 0.0,
    seed: int = 0,
) -> SyntheticScene:
    """Render a single infinite plane covering the whole image.

    Args:
        normal: plane normal, must face the camera over the full image.
        distance: positive offset; the plane passes through -normal * distance.
        noise: per-pixel Gaussian depth noise sigma in meters (seeded).
    """
    normal = unit(normal)
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    rays = _pixel_rays(intrinsics)
    z = _plane_depth(normal, distance, rays, "plane")
    if noise > 0.0:
        rng = np.random.default_rng(seed)
        z = z + rng.normal(0.0, noise, size=z.shape)
    normals = np.broadcast_to(normal, (*z.shape, 3)).copy()
    full = PixelMask.full(intrinsics.width, intrinsics.height)
    return SyntheticScene(
        depth=DepthImage(values=z.astype(np.float32)),
        intrinsics=intrinsics,
        analytic_normals=normals,
        face_masks={"plane": full},
        ground_truth={"plane_normal": normal, "plane_distance": np.float64(distance)},
    )


def make_box_scene(
    faces: list[FaceSpec],
    intrinsics: CameraIntrinsics,
    noise: float = 0.0,
    seed: int = 0,
    handle_face: str | None = None,
) -> SyntheticScene:
    """Compose planar face patches into one depth image, later faces on top.

    The first face is typically a full-image background.  A designated
    handle face (default: the last face) contributes ground truth: the 3D
    point on its plane under its rect center pixel and its outward normal.
    """
    if not faces:
        raise ValueError("at least one face is required")
    rays = _pixel_rays(intrinsics)
    depth = np.full((intrinsics.height, intrinsics.width), np.nan, dtype=np.float64)
    normals = np.zeros((intrinsics.height, intrinsics.width, 3), dtype=np.float64)
    masks: dict[str, PixelMask] = {}

    for face in faces:
        u0, v0, u1, v1 = face.rect
        if u1 <= u0 or v1 <= v0:
            raise ValueError(f"face {face.name!r} has a degenerate rect {face.rect}")
        if u0 < 0 or v0 < 0 or u1 >= intrinsics.width or v1 >= intrinsics.height:
            raise ValueError(f"face {face.name!r} rect {face.rect} exceeds image bounds")
        n = unit(face.normal)
        z = _plane_depth(n, face.distance, rays[v0 : v1 + 1, u0 : u1 + 1], face.name)
        depth[v0 : v1 + 1, u0 : u1 + 1] = z
        normals[v0 : v1 + 1, u0 : u1 + 1] = n
        bits = np.zeros((intrinsics.height, intrinsics.width), dtype=bool)
        bits[v0 : v1 + 1, u0 : u1 + 1] = True
        masks[face.name] = PixelMask(bits=bits)

    ground_truth: dict[str, np.ndarray] = {}
    picked = handle_face if handle_face is not None else faces[-1].name
    face = next(f for f in faces if f.name == picked)
    u0, v0, u1, v1 = face.rect
    hu, hv = (u0 + u1) // 2, (v0 + v1) // 2
    n = unit(face.normal)
    ray = np.array([(hu - intrinsics.cx) / intrinsics.fx, (hv - intrinsics.cy) / intrinsics.fy, 1.0])
    hz = face.distance / (-(ray @ n))
    ground_truth["handle_pixel"] = np.array([hu, hv], dtype=np.float64)
    ground_truth["handle_point"] = ray * hz
    ground_truth["handle_normal"] = n

    if noise > 0.0:
        rng = np.random.default_rng(seed)
        covered = np.isfinite(depth)
        depth[covered] += rng.normal(0.0, noise, size=int(covered.sum()))

    return SyntheticScene(
        depth=DepthImage(values=depth.astype(np.float32)),
        intrinsics=intrinsics,
        analytic_normals=normals,
        face_masks=masks,
        ground_truth=ground_truth,
    )


def _positional_code(
    xs: np.ndarray,
    ys: np.ndarray,
    grid_w: int,
    grid_h: int,
    channels: int,
    phases: np.ndarray,
) -> np.ndarray:
    """Smooth injective positional code with uniquely-peaked cosine matching.

    Channels come in groups of four per harmonic k: (cos k*thx, sin k*thx,
    cos k*thy, sin k*thy) with thx = pi * x / gridW in [0, pi).  The dot
    product of two codes is sum_k cos(k dthx) + cos(k dthy), maximized only
    at zero offset, so cosine NN recovers position exactly on grid points.
    Random per-group phases vary the data with the seed without affecting
    matching (they cancel in the dot product).
    """
    groups = channels // 4
    thx = np.pi * np.asarray(xs, dtype=np.float64) / grid_w
    thy = np.pi * np.asarray(ys, dtype=np.float64) / grid_h
    out = np.zeros((*thx.shape, channels), dtype=np.float64)
    for k in range(groups):
        ax = (k + 1) * thx + phases[k, 0]
        ay = (k + 1) * thy + phases[k, 1]
        out[..., 4 * k + 0] = np.cos(ax)
        out[..., 4 * k + 1] = np.sin(ax)
        out[..., 4 * k + 2] = np.cos(ay)
        out[..., 4 * k + 3] = np.sin(ay)
    return out


def make_coordinate_features(
    grid_h: int,
    grid_w: int,
    channels: int,
    warp: Affine2D,
    seed: int = 0,
) -> tuple[DenseFeatureMap, DenseFeatureMap]:
    """Build a source/target feature-map pair encoding a known warp.

    Source cell (x, y) carries a positional code; target cell (x', y')
    carries the code of warp^-1(x', y').  Cosine nearest-neighbor matching
    from source to target therefore lands on warp(x, y), exactly so when
    that point is a grid cell.  Maps are returned unnormalized with image
    size equal to grid size (1 px per cell).
    """
    if channels < 4:
        raise ValueError(f"need at least 4 channels, got {channels}")
    inv = warp.inverse()  # raises NonInvertibleWarp for singular maps
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(channels // 4, 2))

    gx, gy = np.meshgrid(np.arange(grid_w), np.arange(grid_h))
    source = _positional_code(gx, gy, grid_w, grid_h, channels, phases)

    pts = np.column_stack([gx.reshape(-1), gy.reshape(-1)]).astype(np.float64)
    back = inv.apply(pts)
    target = _positional_code(
        back[:, 0].reshape(grid_h, grid_w),
        back[:, 1].reshape(grid_h, grid_w),
        grid_w,
        grid_h,
        channels,
        phases,
    )

    def wrap(data: np.ndarray) -> DenseFeatureMap:
        return DenseFeatureMap(
            data=data.astype(np.float32),
            image_height=grid_h,
            image_width=grid_w,
            normalized=False,
        )

    return wrap(source), wrap(target)
