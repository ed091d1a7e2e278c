"""Shared fixtures and synthetic-data builders for the test suite."""

from __future__ import annotations

import os

import numpy as np
import pytest

from affordlift import (
    Affine2D,
    AffordanceEntry,
    AffordanceMemory,
    CameraIntrinsics,
    DenseFeatureMap,
    Embedding,
    FaceSpec,
    PixelMask,
    make_box_scene,
    make_coordinate_features,
    normalize_features,
    save_memory,
)
from affordlift.cli import save_intrinsics
from affordlift.formats import save_depth, save_embedding, save_feature_map, save_mask
from affordlift.visualize import write_png


@pytest.fixture
def intrinsics_100() -> CameraIntrinsics:
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100)


@pytest.fixture
def intrinsics_vga() -> CameraIntrinsics:
    return CameraIntrinsics(fx=320.0, fy=320.0, cx=160.0, cy=120.0, width=320, height=240)


def random_feature_map(
    rng: np.random.Generator,
    grid_h: int = 8,
    grid_w: int = 8,
    channels: int = 8,
    image_scale: int = 1,
    normalized: bool = True,
) -> DenseFeatureMap:
    data = rng.normal(size=(grid_h, grid_w, channels)).astype(np.float32)
    fmap = DenseFeatureMap(
        data=data,
        image_height=grid_h * image_scale,
        image_width=grid_w * image_scale,
    )
    return normalize_features(fmap) if normalized else fmap


def unit_embedding(rng: np.random.Generator, dim: int = 16, kind: str = "image") -> Embedding:
    v = rng.normal(size=dim)
    return Embedding(values=(v / np.linalg.norm(v)).astype(np.float32), kind=kind)


def make_memory_on_disk(
    root: str,
    specs: list[dict],
    rng: np.random.Generator,
) -> tuple[str, AffordanceMemory]:
    """Write a complete memory to disk from entry specs and load-compatible assets.

    Each spec may carry: id, task, object_name, feature map (DenseFeatureMap),
    mask (PixelMask or None), waypoints, task_embedding, image_embedding.
    Missing pieces are generated.  Returns (manifest_path, memory).
    """
    os.makedirs(root, exist_ok=True)
    entries = []
    for i, spec in enumerate(specs):
        entry_id = spec.get("id", f"entry-{i:03d}")
        task = spec.get("task", "open the drawer")
        fmap = spec.get("feature_map")
        if fmap is None:
            fmap = random_feature_map(rng)
        fmap_path = os.path.join(root, f"{entry_id}.dfm")
        save_feature_map(fmap, fmap_path)

        mask = spec.get("mask")
        mask_path = None
        if mask is not None:
            mask_path = os.path.join(root, f"{entry_id}.msk")
            save_mask(mask, mask_path)

        image_path = os.path.join(root, f"{entry_id}.png")
        if not os.path.exists(image_path):
            write_png(image_path, np.zeros((fmap.image_height, fmap.image_width, 3), np.uint8))

        task_emb = spec.get("task_embedding", unit_embedding(rng, kind="text"))
        image_emb = spec.get("image_embedding", unit_embedding(rng, kind="image"))
        task_emb_path = os.path.join(root, f"{entry_id}.task.emb")
        image_emb_path = os.path.join(root, f"{entry_id}.image.emb")
        save_embedding(task_emb, task_emb_path)
        save_embedding(image_emb, image_emb_path)

        waypoints = spec.get("waypoints")
        if waypoints is None:
            w, h = fmap.image_width, fmap.image_height
            waypoints = np.array(
                [[w * 0.3, h * 0.5], [w * 0.45, h * 0.5], [w * 0.6, h * 0.5]]
            )

        entries.append(
            AffordanceEntry(
                id=entry_id,
                source=spec.get("source", "custom"),
                image_path=image_path,
                task=task,
                object_name=spec.get("object_name", "drawer"),
                waypoints=np.asarray(waypoints, dtype=np.float64),
                task_embedding=task_emb,
                image_embedding=image_emb,
                task_embedding_path=task_emb_path,
                image_embedding_path=image_emb_path,
                feature_map_path=fmap_path,
                mask_path=mask_path,
            )
        )
    memory = AffordanceMemory(entries=entries)
    manifest = os.path.join(root, "memory.json")
    save_memory(memory, manifest)
    return manifest, memory


def build_e2e_workspace(
    root: str,
    n_tasks: int = 4,
    per_task: int = 3,
    grid: int = 32,
    channels: int = 8,
    shift: tuple[int, int] = (3, 2),
    emb_dim: int = 16,
) -> dict:
    """Build a complete on-disk pipeline workspace with known ground truth.

    The target scene is a drawer-front box scene; its feature map is the
    warped side of a coordinate encoding whose source side belongs to one
    memory entry ("task-0/right"), so transfer must shift that entry's
    waypoints by exactly `shift` onto the drawer handle, and lifting must
    recover the front face's outward normal (0, 0, -1).
    """
    assert n_tasks <= emb_dim
    rng = np.random.default_rng(20_240_101)
    os.makedirs(root, exist_ok=True)
    mem_dir = os.path.join(root, "memory")
    scene_dir = os.path.join(root, "scene")
    os.makedirs(mem_dir, exist_ok=True)
    os.makedirs(scene_dir, exist_ok=True)

    size = grid  # image size equals grid size (1 px per cell)
    intrinsics = CameraIntrinsics(
        fx=1.25 * size, fy=1.25 * size, cx=size / 2, cy=size / 2, width=size, height=size
    )
    # drawer-front scene: rect offset from center so the outward normal has a
    # clean (nondegenerate) image projection
    lo, hi = round(size * 0.1), round(size * 0.64)
    vlo, vhi = round(size * 0.36), round(size * 0.92)
    faces = [
        FaceSpec("background", np.array([0.0, 0.0, -1.0]), 0.9, (0, 0, size - 1, size - 1)),
        FaceSpec("front", np.array([0.0, 0.0, -1.0]), 0.6, (lo, vlo, hi, vhi)),
    ]
    scene = make_box_scene(faces, intrinsics, handle_face="front")
    handle_pixel = scene.ground_truth["handle_pixel"].astype(int)
    handle_point = scene.ground_truth["handle_point"]

    dx, dy = shift
    _, target_fmap = make_coordinate_features(
        grid, grid, channels, Affine2D.translation(dx, dy), seed=777
    )

    # 2D direction of the outward normal seen from the handle: radially away
    # from the principal point
    radial = np.array(
        [
            intrinsics.fx * handle_point[0],
            intrinsics.fy * handle_point[1],
        ]
    )
    radial = radial / np.linalg.norm(radial)

    def basis_text(i: int) -> Embedding:
        v = np.zeros(emb_dim, np.float32)
        v[i] = 1.0
        return Embedding(values=v, kind="text")

    shared_image = unit_embedding(rng, dim=emb_dim, kind="image")

    contact = handle_pixel.astype(np.float64)
    step = 3.0 * radial
    waypoints_target = np.array([contact + k * step for k in range(4)])
    waypoints_source = waypoints_target - [dx, dy]

    specs = []
    for t in range(n_tasks):
        for i in range(per_task):
            entry_id = f"task{t}-e{i}"
            if t == 0 and i == 0:
                entry_id = "right"
                fmap, _ = make_coordinate_features(
                    grid, grid, channels, Affine2D.translation(dx, dy), seed=777
                )
                image_emb = Embedding(values=shared_image.values.copy(), kind="image")
            else:
                fmap, _ = make_coordinate_features(
                    grid, grid, channels, Affine2D.identity(), seed=1000 + t * 97 + i
                )
                mix = 0.8 * shared_image.values + 0.6 * unit_embedding(
                    rng, dim=emb_dim, kind="image"
                ).values
                image_emb = Embedding(
                    values=(mix / np.linalg.norm(mix)).astype(np.float32), kind="image"
                )
            specs.append(
                {
                    "id": entry_id,
                    "task": f"task-{t}",
                    "object_name": "drawer",
                    "feature_map": fmap,
                    "task_embedding": basis_text(t),
                    "image_embedding": image_emb,
                    "waypoints": waypoints_source,
                }
            )
    manifest, memory = make_memory_on_disk(mem_dir, specs, rng)

    paths = {
        "memory_dir": mem_dir,
        "manifest": manifest,
        "image": os.path.join(scene_dir, "target.png"),
        "depth": os.path.join(scene_dir, "depth.dpt"),
        "intrinsics": os.path.join(scene_dir, "intrinsics.json"),
        "feature_map": os.path.join(scene_dir, "target.dfm"),
        "target_mask": os.path.join(scene_dir, "front.msk"),
        "image_emb": os.path.join(scene_dir, "target_image.emb"),
        "instruction_emb": os.path.join(scene_dir, "instruction.emb"),
        "object_emb": os.path.join(scene_dir, "object.emb"),
    }
    gradient = (
        np.linspace(0, 255, size, dtype=np.uint8)[None, :, None]
        .repeat(size, axis=0)
        .repeat(3, axis=2)
    )
    write_png(paths["image"], gradient)
    save_depth(scene.depth, paths["depth"])
    save_intrinsics(intrinsics, paths["intrinsics"])
    save_feature_map(target_fmap, paths["feature_map"])
    save_mask(scene.face_masks["front"], paths["target_mask"])
    save_embedding(shared_image, paths["image_emb"])
    save_embedding(basis_text(0), paths["instruction_emb"])
    object_emb = Embedding(values=shared_image.values.copy(), kind="text")
    save_embedding(object_emb, paths["object_emb"])

    return {
        "paths": paths,
        "memory": memory,
        "intrinsics": intrinsics,
        "scene": scene,
        "handle_pixel": handle_pixel,
        "handle_point": handle_point,
        "expected_entry": "right",
        "shift": (dx, dy),
        "radial": radial,
        "waypoints_target": waypoints_target,
    }
