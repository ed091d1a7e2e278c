"""Dense feature maps, flat embeddings, and cosine correspondence search.

Feature maps live at their native model grid resolution; matching runs on
the grid and reports image-pixel coordinates of cell centers.  A grid cell
(gx, gy) covers image pixels [gx*sx, (gx+1)*sx) x [gy*sy, (gy+1)*sy) where
sx = imageWidth / gridWidth, so its center sits at ((gx + 0.5)*sx - 0.5,
(gy + 0.5)*sy - 0.5) under the pixel-centers-at-integers convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyMask, OutOfBounds, ZeroVector


@dataclass
class DenseFeatureMap:
    """Row-major grid of float32 feature vectors from some vision model."""

    data: np.ndarray  # (gridH, gridW, channels) float32
    image_height: int
    image_width: int
    normalized: bool = False
    zero_features: int = 0  # all-zero vectors found during normalization

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise DimensionMismatch(f"feature data must be 3D, got {self.data.shape}")
        if self.image_height <= 0 or self.image_width <= 0:
            raise DimensionMismatch(
                f"image size must be positive, got {self.image_width}x{self.image_height}"
            )

    @property
    def grid_height(self) -> int:
        return self.data.shape[0]

    @property
    def grid_width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def scale_x(self) -> float:
        return self.image_width / self.grid_width

    @property
    def scale_y(self) -> float:
        return self.image_height / self.grid_height

    def cell_center(self, gx: int, gy: int) -> tuple[float, float]:
        """Image-pixel coordinates of a grid cell's center."""
        return (gx + 0.5) * self.scale_x - 0.5, (gy + 0.5) * self.scale_y - 0.5


@dataclass
class Embedding:
    """Flat float32 vector from an image or text encoder."""

    values: np.ndarray
    kind: str  # "image" | "text"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if self.kind not in ("image", "text"):
            raise ValueError(f"unknown embedding kind {self.kind!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding contains non-finite values")


@dataclass
class PixelMask:
    """Boolean inclusion mask at image resolution."""

    bits: np.ndarray  # (H, W) bool

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise DimensionMismatch(f"mask must be 2D, got shape {self.bits.shape}")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def full(cls, width: int, height: int) -> "PixelMask":
        return cls(bits=np.ones((height, width), dtype=bool))


def normalize_features(fmap: DenseFeatureMap) -> DenseFeatureMap:
    """L2-normalize every feature vector; zero vectors pass through.

    The count of zero (padding) vectors is recorded on the returned map's
    zero_features field.
    """
    if fmap.normalized:
        raise ValueError("feature map is already normalized")
    flat = fmap.data.reshape(-1, fmap.channels).astype(np.float64)
    norms = np.linalg.norm(flat, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    out = (flat / safe[:, None]).astype(np.float32)
    out[zero] = 0.0
    return DenseFeatureMap(
        data=out.reshape(fmap.data.shape),
        image_height=fmap.image_height,
        image_width=fmap.image_width,
        normalized=True,
        zero_features=int(zero.sum()),
    )


def sample_feature(fmap: DenseFeatureMap, u: float, v: float) -> np.ndarray:
    """Bilinearly sample the feature grid at image coordinates (u, v).

    The four surrounding grid cells are blended (clamped at borders); when
    the map is normalized the interpolated vector is re-normalized so cosine
    scores stay comparable.  Returns a float64 vector.
    """
    half_x, half_y = 0.5, 0.5
    if not (-half_x <= u < fmap.image_width - half_x) or not (
        -half_y <= v < fmap.image_height - half_y
    ):
        raise OutOfBounds(
            f"({u}, {v}) outside {fmap.image_width}x{fmap.image_height} image"
        )

    gx = (u + 0.5) / fmap.scale_x - 0.5
    gy = (v + 0.5) / fmap.scale_y - 0.5
    gx = min(max(gx, 0.0), fmap.grid_width - 1.0)
    gy = min(max(gy, 0.0), fmap.grid_height - 1.0)
    x0, y0 = int(np.floor(gx)), int(np.floor(gy))
    x1, y1 = min(x0 + 1, fmap.grid_width - 1), min(y0 + 1, fmap.grid_height - 1)
    tx, ty = gx - x0, gy - y0

    data = fmap.data
    if tx == 0.0 and ty == 0.0:
        return data[y0, x0].astype(np.float64)
    c00 = data[y0, x0].astype(np.float64)
    c10 = data[y0, x1].astype(np.float64)
    c01 = data[y1, x0].astype(np.float64)
    c11 = data[y1, x1].astype(np.float64)
    vec = (1 - ty) * ((1 - tx) * c00 + tx * c10) + ty * ((1 - tx) * c01 + tx * c11)
    if fmap.normalized:
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec = vec / norm
    return vec


def cells_in_mask(fmap: DenseFeatureMap, mask: PixelMask | None) -> np.ndarray:
    """Boolean (gridH, gridW) map of cells whose center pixel is masked in."""
    if mask is None:
        return np.ones((fmap.grid_height, fmap.grid_width), dtype=bool)
    if mask.height != fmap.image_height or mask.width != fmap.image_width:
        raise DimensionMismatch(
            f"mask {mask.width}x{mask.height} vs feature map image "
            f"{fmap.image_width}x{fmap.image_height}"
        )
    gx = np.arange(fmap.grid_width)
    gy = np.arange(fmap.grid_height)
    cu = np.floor((gx + 0.5) * fmap.scale_x).astype(int)  # floor(center + 0.5)
    cv = np.floor((gy + 0.5) * fmap.scale_y).astype(int)
    cu = np.clip(cu, 0, mask.width - 1)
    cv = np.clip(cv, 0, mask.height - 1)
    return mask.bits[np.ix_(cv, cu)]


def best_match(
    query: np.ndarray,
    target: DenseFeatureMap,
    mask: PixelMask | None = None,
) -> tuple[float, float, float]:
    """Find the target grid cell most cosine-similar to a query vector.

    Zero (padding) cells rank as -inf and are never returned.  Ties break
    toward the smallest row-major cell index.

    Returns:
        (u, v, score): image-pixel coordinates of the winning cell's center
        and its cosine similarity.
    """
    if not target.normalized:
        raise ValueError("best_match requires a normalized target map")
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    if query.shape[0] != target.channels:
        raise DimensionMismatch(
            f"query has {query.shape[0]} channels, target {target.channels}"
        )
    qn = float(np.linalg.norm(query))
    if qn == 0.0:
        raise ZeroVector("query feature vector is zero")

    cells = target.data.reshape(-1, target.channels).astype(np.float64)
    norms = np.linalg.norm(cells, axis=1)
    zero_cells = norms == 0.0
    scores = cells @ (query / qn)
    scores = np.divide(scores, norms, out=np.full_like(scores, -np.inf), where=~zero_cells)

    allowed = cells_in_mask(target, mask).reshape(-1)
    if not allowed.any():
        raise EmptyMask("mask excludes every grid cell")
    scores[~allowed] = -np.inf

    best = int(np.argmax(scores))  # first max = smallest row-major index
    if not np.isfinite(scores[best]):
        raise EmptyMask("every masked cell is a zero (padding) vector")
    gy, gx = divmod(best, target.grid_width)
    u, v = target.cell_center(gx, gy)
    return u, v, float(scores[best])


def cosine(a, b) -> float:
    """Cosine similarity between two embeddings or raw vectors."""
    av = a.values if isinstance(a, Embedding) else np.asarray(a)
    bv = b.values if isinstance(b, Embedding) else np.asarray(b)
    av = av.astype(np.float64).reshape(-1)
    bv = bv.astype(np.float64).reshape(-1)
    if av.shape[0] != bv.shape[0]:
        raise DimensionMismatch(f"dimensions {av.shape[0]} vs {bv.shape[0]}")
    na, nb = float(np.linalg.norm(av)), float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    return float(np.dot(av, bv) / (na * nb))
