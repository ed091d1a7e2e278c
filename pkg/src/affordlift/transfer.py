"""2D affordance transfer: dense-correspondence waypoint matching + line fit.

Each demonstration waypoint is matched into the target image by cosine
similarity of dense features; a seeded two-point RANSAC then rejects
outlier matches and fits the post-contact direction.  The contact point is
always the first transferred waypoint, whatever its inlier status, because
contact accuracy matters more than collinearity with the fitted line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateLine,
    InsufficientPoints,
    LowConfidenceTransfer,
)
from .features import DenseFeatureMap, PixelMask, best_match, sample_feature
from .memory import AffordanceEntry

DEFAULT_RANSAC_ITERATIONS = 256
DEFAULT_INLIER_TOL = 3.0  # px
DEFAULT_SCORE_FLOOR = 0.3


@dataclass
class Affordance2D:
    """Transferred 2D affordance: contact pixel + unit post-contact direction."""

    contact: np.ndarray  # (2,) float64
    direction: np.ndarray  # (2,) float64, unit
    waypoints: np.ndarray  # (N, 2) matched pixels, source order
    scores: np.ndarray  # (N,) cosine scores
    inliers: np.ndarray  # (N,) bool

    def __post_init__(self) -> None:
        self.contact = np.asarray(self.contact, dtype=np.float64).reshape(2)
        self.direction = np.asarray(self.direction, dtype=np.float64).reshape(2)
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 2)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.inliers = np.asarray(self.inliers, dtype=bool).reshape(-1)
        if not np.array_equal(self.contact, self.waypoints[0]):
            raise ValueError("contact must equal the first matched waypoint")
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-6:
            raise ValueError(f"direction must be unit, got {self.direction}")
        if int(self.inliers.sum()) < 2:
            raise ValueError("need at least 2 inlier waypoints")

    def to_json_dict(self) -> dict:
        return {
            "contact": [float(x) for x in self.contact],
            "direction": [float(x) for x in self.direction],
            "waypoints": [[float(u), float(v)] for u, v in self.waypoints],
            "scores": [float(s) for s in self.scores],
            "inliers": [bool(b) for b in self.inliers],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Affordance2D":
        return cls(
            contact=np.asarray(doc["contact"], dtype=np.float64),
            direction=np.asarray(doc["direction"], dtype=np.float64),
            waypoints=np.asarray(doc["waypoints"], dtype=np.float64),
            scores=np.asarray(doc["scores"], dtype=np.float64),
            inliers=np.asarray(doc["inliers"], dtype=bool),
        )


def transfer_waypoints(
    entry: AffordanceEntry,
    source_map: DenseFeatureMap,
    target_map: DenseFeatureMap,
    target_mask: PixelMask | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Match every demonstration waypoint into the target image.

    Returns:
        (points, scores): (N, 2) matched pixel coordinates in source
        waypoint order and their cosine similarities.
    """
    if not source_map.normalized or not target_map.normalized:
        raise ValueError("transfer requires normalized feature maps")
    points = []
    scores = []
    for u, v in entry.waypoints:
        query = sample_feature(source_map, u, v)
        mu, mv, score = best_match(query, target_map, target_mask)
        points.append((mu, mv))
        scores.append(score)
    return np.asarray(points, dtype=np.float64), np.asarray(scores, dtype=np.float64)


def _line_distances(points: np.ndarray, anchor: np.ndarray, direction: np.ndarray) -> np.ndarray:
    rel = points - anchor
    return np.abs(rel[:, 0] * direction[1] - rel[:, 1] * direction[0])


def ransac_line(
    points: np.ndarray,
    iterations: int = DEFAULT_RANSAC_ITERATIONS,
    inlier_tol: float = DEFAULT_INLIER_TOL,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Two-point RANSAC line fit over ordered 2D points.

    Samples point pairs, keeps the largest consensus set (points within
    inlier_tol of the candidate line), and refits the direction as the
    principal axis of the inliers.  The sign points from the
    earliest-index inlier toward the latest-index inlier, using waypoint
    temporal order to disambiguate the otherwise unsigned fit.

    Returns:
        (direction, inlier_flags): unit (2,) direction and (N,) bool flags.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = points.shape[0]
    if n < 2:
        raise InsufficientPoints(f"need >= 2 points, got {n}")
    spread = points.max(axis=0) - points.min(axis=0)
    if float(np.linalg.norm(spread)) < 1e-12:
        raise DegenerateLine("all points coincide; no line direction exists")

    rng = np.random.default_rng(seed)
    best_flags: np.ndarray | None = None
    best_count = -1
    for _ in range(iterations):
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        chord = points[j] - points[i]
        norm = float(np.linalg.norm(chord))
        if norm < 1e-12:
            continue
        flags = _line_distances(points, points[i], chord / norm) <= inlier_tol
        count = int(flags.sum())
        if count > best_count:
            best_count = count
            best_flags = flags

    if best_flags is None:
        # Seeded sampling found only coincident pairs; fall back to a
        # deterministic scan before declaring the input degenerate.
        for i in range(n):
            for j in range(i + 1, n):
                chord = points[j] - points[i]
                norm = float(np.linalg.norm(chord))
                if norm >= 1e-12:
                    best_flags = _line_distances(points, points[i], chord / norm) <= inlier_tol
                    break
            if best_flags is not None:
                break
    if best_flags is None:
        raise DegenerateLine("all candidate point pairs coincide")

    inliers = points[best_flags]
    centered = inliers - inliers.mean(axis=0)
    cov = centered.T @ centered
    eigvals, eigvecs = np.linalg.eigh(cov)
    direction = eigvecs[:, int(np.argmax(eigvals))]
    direction = direction / np.linalg.norm(direction)

    idx = np.nonzero(best_flags)[0]
    span = points[idx[-1]] - points[idx[0]]
    if float(np.dot(direction, span)) < 0.0:
        direction = -direction
    return direction, best_flags


@dataclass(frozen=True)
class TransferParams:
    score_floor: float = DEFAULT_SCORE_FLOOR
    ransac_iterations: int = DEFAULT_RANSAC_ITERATIONS
    ransac_inlier_tol: float = DEFAULT_INLIER_TOL
    ransac_seed: int = 0


def transfer_affordance(
    entry: AffordanceEntry,
    source_map: DenseFeatureMap,
    target_map: DenseFeatureMap,
    target_mask: PixelMask | None = None,
    params: TransferParams = TransferParams(),
) -> Affordance2D:
    """Transfer waypoints then fit the post-contact direction.

    Fails with LowConfidenceTransfer when the mean match score falls below
    params.score_floor, so garbage correspondences don't silently propagate
    into 3D lifting.
    """
    points, scores = transfer_waypoints(entry, source_map, target_map, target_mask)
    mean_score = float(scores.mean())
    if mean_score < params.score_floor:
        raise LowConfidenceTransfer(
            f"mean correspondence score {mean_score:.4f} below floor "
            f"{params.score_floor}"
        )
    direction, flags = ransac_line(
        points,
        iterations=params.ransac_iterations,
        inlier_tol=params.ransac_inlier_tol,
        seed=params.ransac_seed,
    )
    return Affordance2D(
        contact=points[0],
        direction=direction,
        waypoints=points,
        scores=scores,
        inliers=flags,
    )
