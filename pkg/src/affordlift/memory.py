"""Affordance memory: demonstration entries, ingestion, and the manifest.

A memory is a set of demonstrations, each an image plus an ordered list of
2D waypoints (first waypoint = contact point), a task label, an object
name, and precomputed embeddings/feature maps.  Three ingestion routes
produce entries: robotic trajectories (project the end effector), HOI hand
keypoints (average them), and custom two-click annotations (interpolate).

The manifest is a human-editable ``memory.json``: ``{"version": 1,
"entries": [...]}`` with file paths relative to the manifest directory and
waypoints as ``[[u, v], ...]`` floats.  Entries may carry an optional
manual-refinement ``offset`` ``[du, dv]`` applied to all waypoints at load
time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateAnnotation,
    DuplicateId,
    ManifestParseError,
    MissingAsset,
    NoContactEvent,
    NoContactInMask,
    OutOfBounds,
    ProjectionOutOfImage,
)
from .features import Embedding, PixelMask
from .formats import load_embedding, peek_feature_map_header
from .geometry import CameraIntrinsics, nearest_pixel, project

SOURCES = ("robotic", "hoi", "custom")

DEFAULT_STOP_EPS = 0.005  # m of end-effector motion counted as "not moving"
DEFAULT_STOP_STEPS = 3
MAX_POST_CONTACT_STEPS = 10


@dataclass
class AffordanceEntry:
    """One demonstration: image, task, ordered 2D waypoints, embeddings."""

    id: str
    source: str
    image_path: str
    task: str
    object_name: str
    waypoints: np.ndarray  # (N, 2) float64, offset already applied
    task_embedding: Embedding
    image_embedding: Embedding
    task_embedding_path: str
    image_embedding_path: str
    feature_map_path: str
    mask_path: str | None = None
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 2)
        if self.waypoints.shape[0] < 2:
            raise ValueError(f"entry {self.id!r} needs >= 2 waypoints")

    @property
    def contact(self) -> np.ndarray:
        return self.waypoints[0]


@dataclass
class AffordanceMemory:
    """Immutable-after-load set of entries bucketed by task."""

    entries: list[AffordanceEntry]
    task_index: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for entry in self.entries:
            if entry.id in seen:
                raise DuplicateId(f"duplicate entry id {entry.id!r}")
            seen.add(entry.id)
        index: dict[str, list[str]] = {}
        for entry in self.entries:
            index.setdefault(entry.task, []).append(entry.id)
        self.task_index = index

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, entry_id: str) -> AffordanceEntry:
        for entry in self.entries:
            if entry.id == entry_id:
                return entry
        raise KeyError(entry_id)

    def tasks(self) -> list[str]:
        return sorted(self.task_index)

    def entries_for_task(self, task: str) -> list[AffordanceEntry]:
        ids = set(self.task_index.get(task, []))
        return [e for e in self.entries if e.id in ids]


# -- ingestion ---------------------------------------------------------------

def _in_image(u: float, v: float, width: int, height: int) -> bool:
    return -0.5 <= u < width - 0.5 and -0.5 <= v < height - 0.5


def ingest_robotic(
    ee_positions: np.ndarray,
    gripper_closed: np.ndarray,
    intrinsics: CameraIntrinsics,
    extrinsics: np.ndarray,
    image_path: str,
    task: str,
    object_name: str,
    *,
    entry_id: str,
    task_embedding: Embedding,
    image_embedding: Embedding,
    task_embedding_path: str,
    image_embedding_path: str,
    feature_map_path: str,
    mask_path: str | None = None,
    stop_eps: float = DEFAULT_STOP_EPS,
    stop_steps: int = DEFAULT_STOP_STEPS,
) -> AffordanceEntry:
    """Extract waypoints from a robot trajectory.

    The contact instant is the first step where the gripper closes; the
    contact waypoint and up to 10 subsequent end-effector positions are
    projected through extrinsics (camera-from-world, 4x4) and intrinsics.
    The trajectory is truncated once the end effector moves less than
    stop_eps for stop_steps consecutive steps (those idle points are
    dropped), or at the first point projecting outside the image.
    """
    ee_positions = np.asarray(ee_positions, dtype=np.float64).reshape(-1, 3)
    gripper_closed = np.asarray(gripper_closed, dtype=bool).reshape(-1)
    if ee_positions.shape[0] != gripper_closed.shape[0]:
        raise ValueError("positions and gripper flags must be time-aligned")
    extrinsics = np.asarray(extrinsics, dtype=np.float64).reshape(4, 4)

    closed = np.nonzero(gripper_closed)[0]
    if closed.size == 0:
        raise NoContactEvent("gripper never closes in this trajectory")
    t0 = int(closed[0])

    def to_pixel(t: int) -> tuple[float, float] | None:
        p_cam = extrinsics[:3, :3] @ ee_positions[t] + extrinsics[:3, 3]
        if p_cam[2] <= 0:
            return None
        u, v = project(p_cam, intrinsics)
        if not _in_image(u, v, intrinsics.width, intrinsics.height):
            return None
        return u, v

    contact = to_pixel(t0)
    if contact is None:
        raise ProjectionOutOfImage(
            f"contact at step {t0} projects outside the {intrinsics.width}x"
            f"{intrinsics.height} frame"
        )

    waypoints = [contact]
    idle_run = 0
    t_end = min(t0 + MAX_POST_CONTACT_STEPS, ee_positions.shape[0] - 1)
    for t in range(t0 + 1, t_end + 1):
        pixel = to_pixel(t)
        if pixel is None:
            break
        waypoints.append(pixel)
        step = float(np.linalg.norm(ee_positions[t] - ee_positions[t - 1]))
        if step < stop_eps:
            idle_run += 1
            if idle_run >= stop_steps:
                del waypoints[-stop_steps:]
                break
        else:
            idle_run = 0

    if len(waypoints) < 2:
        raise ProjectionOutOfImage(
            "post-contact trajectory leaves the frame immediately; "
            "fewer than 2 waypoints remain"
        )
    return AffordanceEntry(
        id=entry_id,
        source="robotic",
        image_path=image_path,
        task=task,
        object_name=object_name,
        waypoints=np.array(waypoints, dtype=np.float64),
        task_embedding=task_embedding,
        image_embedding=image_embedding,
        task_embedding_path=task_embedding_path,
        image_embedding_path=image_embedding_path,
        feature_map_path=feature_map_path,
        mask_path=mask_path,
    )


def ingest_hoi(
    frames: list[np.ndarray],
    object_mask: PixelMask,
    image_path: str,
    task: str,
    object_name: str,
    *,
    entry_id: str,
    task_embedding: Embedding,
    image_embedding: Embedding,
    task_embedding_path: str,
    image_embedding_path: str,
    feature_map_path: str,
    mask_path: str | None = None,
) -> AffordanceEntry:
    """Extract waypoints from per-frame hand keypoints.

    The contact point is the mean of first-frame keypoints inside the
    object mask; each frame contributes the mean of all its keypoints, and
    the whole trajectory is shifted so its first point coincides with the
    contact point.  Frames without keypoints are skipped.
    """
    frames = [np.asarray(f, dtype=np.float64).reshape(-1, 2) for f in frames]
    frames = [f for f in frames if f.shape[0] > 0]
    if not frames:
        raise ValueError("need at least one frame with keypoints")

    first = frames[0]
    inside = []
    for u, v in first:
        if not _in_image(u, v, object_mask.width, object_mask.height):
            continue
        pu, pv = nearest_pixel(u, v, object_mask.width, object_mask.height)
        if object_mask.bits[pv, pu]:
            inside.append((u, v))
    if not inside:
        raise NoContactInMask("no first-frame keypoint falls inside the object mask")
    contact = np.mean(np.asarray(inside, dtype=np.float64), axis=0)

    trajectory = np.array([f.mean(axis=0) for f in frames], dtype=np.float64)
    shifted = trajectory + (contact - trajectory[0])

    keep = len(shifted)
    for i, (u, v) in enumerate(shifted):
        if not _in_image(u, v, object_mask.width, object_mask.height):
            keep = i
            break
    shifted = shifted[:keep]
    if shifted.shape[0] < 2:
        raise OutOfBounds("shifted trajectory leaves the image; fewer than 2 waypoints")

    return AffordanceEntry(
        id=entry_id,
        source="hoi",
        image_path=image_path,
        task=task,
        object_name=object_name,
        waypoints=shifted,
        task_embedding=task_embedding,
        image_embedding=image_embedding,
        task_embedding_path=task_embedding_path,
        image_embedding_path=image_embedding_path,
        feature_map_path=feature_map_path,
        mask_path=mask_path,
    )


def ingest_custom(
    image_size: tuple[int, int],
    start: tuple[float, float],
    end: tuple[float, float],
    n_points: int,
    image_path: str,
    task: str,
    object_name: str,
    *,
    entry_id: str,
    task_embedding: Embedding,
    image_embedding: Embedding,
    task_embedding_path: str,
    image_embedding_path: str,
    feature_map_path: str,
    mask_path: str | None = None,
) -> AffordanceEntry:
    """Interpolate n_points waypoints on the segment [start, end], inclusive."""
    width, height = image_size
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    if np.array_equal(start, end):
        raise DegenerateAnnotation(f"start and end coincide at {start.tolist()}")
    for name, (u, v) in (("start", start), ("end", end)):
        if not _in_image(u, v, width, height):
            raise OutOfBounds(f"{name} point ({u}, {v}) outside {width}x{height} image")
    ts = np.linspace(0.0, 1.0, n_points)
    waypoints = start[None, :] + ts[:, None] * (end - start)[None, :]
    return AffordanceEntry(
        id=entry_id,
        source="custom",
        image_path=image_path,
        task=task,
        object_name=object_name,
        waypoints=waypoints,
        task_embedding=task_embedding,
        image_embedding=image_embedding,
        task_embedding_path=task_embedding_path,
        image_embedding_path=image_embedding_path,
        feature_map_path=feature_map_path,
        mask_path=mask_path,
    )


# -- manifest ------------------------------------------------------------------

MANIFEST_VERSION = 1


def save_memory(memory: AffordanceMemory, manifest_path: str) -> None:
    """Write the manifest atomically (temp file + rename).

    Paths are stored relative to the manifest directory; waypoints are
    stored raw (with the manual offset backed out) so re-loading reapplies
    the offset to the same effect.
    """
    base = os.path.dirname(os.path.abspath(manifest_path))

    def rel(path: str | None) -> str | None:
        return None if path is None else os.path.relpath(os.path.abspath(path), base)

    entries = []
    for e in memory.entries:
        raw = e.waypoints - np.asarray(e.offset, dtype=np.float64)
        record = {
            "id": e.id,
            "source": e.source,
            "image": rel(e.image_path),
            "task": e.task,
            "object_name": e.object_name,
            "waypoints": [[float(u), float(v)] for u, v in raw],
            "task_embedding": rel(e.task_embedding_path),
            "image_embedding": rel(e.image_embedding_path),
            "feature_map": rel(e.feature_map_path),
        }
        if e.mask_path is not None:
            record["mask"] = rel(e.mask_path)
        if e.offset != (0.0, 0.0):
            record["offset"] = [float(e.offset[0]), float(e.offset[1])]
        entries.append(record)

    payload = json.dumps({"version": MANIFEST_VERSION, "entries": entries}, indent=2)
    tmp = f"{manifest_path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(payload + "\n")
    os.replace(tmp, manifest_path)


def load_memory(manifest_path: str) -> AffordanceMemory:
    """Parse and validate a manifest; resolve paths and load embeddings.

    Validation covers: JSON schema, unique ids, existence of every
    referenced asset, and waypoints within the feature map's image bounds
    (after applying any manual offset).
    """
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise MissingAsset(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{manifest_path}: {exc}") from exc

    if not isinstance(doc, dict) or doc.get("version") != MANIFEST_VERSION:
        raise ManifestParseError(
            f"{manifest_path}: expected {{'version': {MANIFEST_VERSION}, ...}}"
        )
    records = doc.get("entries")
    if not isinstance(records, list):
        raise ManifestParseError(f"{manifest_path}: 'entries' must be a list")

    base = os.path.dirname(os.path.abspath(manifest_path))

    def resolve(rel_path: str, required: bool = True) -> str:
        path = os.path.normpath(os.path.join(base, rel_path))
        if required and not os.path.exists(path):
            raise MissingAsset(f"manifest references missing file: {path}")
        return path

    entries: list[AffordanceEntry] = []
    for i, rec in enumerate(records):
        try:
            entry_id = rec["id"]
            source = rec["source"]
            image_path = resolve(rec["image"])
            task = rec["task"]
            object_name = rec["object_name"]
            raw_waypoints = np.asarray(rec["waypoints"], dtype=np.float64).reshape(-1, 2)
            task_emb_path = resolve(rec["task_embedding"])
            image_emb_path = resolve(rec["image_embedding"])
            feature_map_path = resolve(rec["feature_map"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestParseError(f"{manifest_path}: entry {i}: {exc}") from exc

        mask_path = resolve(rec["mask"]) if rec.get("mask") is not None else None
        offset = tuple(float(x) for x in rec.get("offset", (0.0, 0.0)))
        if len(offset) != 2:
            raise ManifestParseError(f"{manifest_path}: entry {i}: offset must be [du, dv]")

        waypoints = raw_waypoints + np.asarray(offset, dtype=np.float64)
        _, _, _, img_h, img_w = peek_feature_map_header(feature_map_path)
        for u, v in waypoints:
            if not _in_image(u, v, img_w, img_h):
                raise ManifestParseError(
                    f"{manifest_path}: entry {entry_id!r}: waypoint ({u}, {v}) "
                    f"outside {img_w}x{img_h} image"
                )

        task_embedding = load_embedding(task_emb_path)
        image_embedding = load_embedding(image_emb_path)
        for kind, emb in (("task", task_embedding), ("image", image_embedding)):
            if not emb.values.any():
                raise ManifestParseError(
                    f"{manifest_path}: entry {entry_id!r}: zero {kind} embedding"
                )

        entries.append(
            AffordanceEntry(
                id=entry_id,
                source=source,
                image_path=image_path,
                task=task,
                object_name=object_name,
                waypoints=waypoints,
                task_embedding=task_embedding,
                image_embedding=image_embedding,
                task_embedding_path=task_emb_path,
                image_embedding_path=image_emb_path,
                feature_map_path=feature_map_path,
                mask_path=mask_path,
                offset=offset,
            )
        )
    return AffordanceMemory(entries=entries)


def append_entry(memory: AffordanceMemory, entry: AffordanceEntry) -> AffordanceMemory:
    """Return a new memory with one more entry (id uniqueness re-checked)."""
    return AffordanceMemory(entries=[*memory.entries, entry])


def entries_structurally_equal(a: AffordanceEntry, b: AffordanceEntry) -> bool:
    return (
        a.id == b.id
        and a.source == b.source
        and os.path.abspath(a.image_path) == os.path.abspath(b.image_path)
        and a.task == b.task
        and a.object_name == b.object_name
        and np.allclose(a.waypoints, b.waypoints, atol=1e-9)
        and np.array_equal(a.task_embedding.values, b.task_embedding.values)
        and np.array_equal(a.image_embedding.values, b.image_embedding.values)
        and os.path.abspath(a.feature_map_path) == os.path.abspath(b.feature_map_path)
        and (a.mask_path is None) == (b.mask_path is None)
        and a.offset == b.offset
    )


def memories_structurally_equal(a: AffordanceMemory, b: AffordanceMemory) -> bool:
    if len(a) != len(b) or a.task_index.keys() != b.task_index.keys():
        return False
    return all(entries_structurally_equal(x, y) for x, y in zip(a.entries, b.entries))
