#!/usr/bin/env python3
"""Build a self-contained demo workspace under ./demo (or a given directory).

Creates a synthetic affordance memory (several tasks, one entry that
genuinely corresponds to the target scene under a known pixel shift) plus a
target observation: drawer-front depth, intrinsics, feature map, mask, and
embeddings.  Everything is written in the pipeline's on-disk formats so the
CLI can run against it; ground truth lands in demo/ground_truth.json.

Usage:
    python3 scripts/make_demo_fixtures.py [--root demo] [--tasks 4]
"""

import argparse
import json
import os

import numpy as np

from affordlift import (
    Affine2D,
    AffordanceEntry,
    AffordanceMemory,
    CameraIntrinsics,
    Embedding,
    FaceSpec,
    make_box_scene,
    make_coordinate_features,
    save_memory,
)
from affordlift.cli import save_intrinsics
from affordlift.formats import save_depth, save_embedding, save_feature_map, save_mask
from affordlift.visualize import write_png

GRID = 64
CHANNELS = 16
SHIFT = (4, 3)
EMB_DIM = 16


def build(root: str, n_tasks: int, per_task: int) -> None:
    rng = np.random.default_rng(7)
    mem_dir = os.path.join(root, "memory")
    scene_dir = os.path.join(root, "scene")
    os.makedirs(mem_dir, exist_ok=True)
    os.makedirs(scene_dir, exist_ok=True)

    size = GRID
    intrinsics = CameraIntrinsics(
        fx=1.25 * size, fy=1.25 * size, cx=size / 2, cy=size / 2, width=size, height=size
    )
    faces = [
        FaceSpec("background", np.array([0.0, 0.0, -1.0]), 0.9, (0, 0, size - 1, size - 1)),
        FaceSpec("front", np.array([0.0, 0.0, -1.0]), 0.6,
                 (round(size * 0.1), round(size * 0.36), round(size * 0.64), round(size * 0.92))),
    ]
    scene = make_box_scene(faces, intrinsics, handle_face="front")
    handle_pixel = scene.ground_truth["handle_pixel"]
    handle_point = scene.ground_truth["handle_point"]

    dx, dy = SHIFT
    source_fmap, target_fmap = make_coordinate_features(
        GRID, GRID, CHANNELS, Affine2D.translation(dx, dy), seed=123
    )

    radial = np.array([intrinsics.fx * handle_point[0], intrinsics.fy * handle_point[1]])
    radial /= np.linalg.norm(radial)
    contact = handle_pixel.astype(np.float64)
    waypoints_source = np.array([contact + k * 3.0 * radial for k in range(4)]) - [dx, dy]

    def text_emb(i):
        v = np.zeros(EMB_DIM, np.float32)
        v[i % EMB_DIM] = 1.0
        return Embedding(values=v, kind="text")

    shared = rng.normal(size=EMB_DIM)
    shared = Embedding(values=(shared / np.linalg.norm(shared)).astype(np.float32), kind="image")

    entries = []
    for t in range(n_tasks):
        for i in range(per_task):
            if t == 0 and i == 0:
                entry_id, fmap = "demo-right", source_fmap
                image_emb = Embedding(values=shared.values.copy(), kind="image")
            else:
                entry_id = f"demo-t{t}-e{i}"
                fmap, _ = make_coordinate_features(
                    GRID, GRID, CHANNELS, Affine2D.identity(), seed=500 + 31 * t + i
                )
                mix = 0.8 * shared.values + 0.6 * rng.normal(size=EMB_DIM)
                image_emb = Embedding(
                    values=(mix / np.linalg.norm(mix)).astype(np.float32), kind="image"
                )
            fmap_path = os.path.join(mem_dir, f"{entry_id}.dfm")
            save_feature_map(fmap, fmap_path)
            image_path = os.path.join(mem_dir, f"{entry_id}.png")
            write_png(image_path, np.zeros((size, size, 3), np.uint8))
            task_emb = text_emb(t)
            task_path = os.path.join(mem_dir, f"{entry_id}.task.emb")
            image_emb_path = os.path.join(mem_dir, f"{entry_id}.image.emb")
            save_embedding(task_emb, task_path)
            save_embedding(image_emb, image_emb_path)
            entries.append(
                AffordanceEntry(
                    id=entry_id,
                    source="custom",
                    image_path=image_path,
                    task=f"open the drawer {t}" if t else "open the drawer",
                    object_name="drawer",
                    waypoints=waypoints_source,
                    task_embedding=task_emb,
                    image_embedding=image_emb,
                    task_embedding_path=task_path,
                    image_embedding_path=image_emb_path,
                    feature_map_path=fmap_path,
                )
            )
    save_memory(AffordanceMemory(entries=entries), os.path.join(mem_dir, "memory.json"))

    gradient = (
        np.linspace(40, 220, size, dtype=np.uint8)[None, :, None]
        .repeat(size, axis=0).repeat(3, axis=2)
    )
    write_png(os.path.join(scene_dir, "target.png"), gradient)
    save_depth(scene.depth, os.path.join(scene_dir, "depth.dpt"))
    save_intrinsics(intrinsics, os.path.join(scene_dir, "intrinsics.json"))
    save_feature_map(target_fmap, os.path.join(scene_dir, "target.dfm"))
    save_mask(scene.face_masks["front"], os.path.join(scene_dir, "front.msk"))
    save_embedding(shared, os.path.join(scene_dir, "target_image.emb"))
    save_embedding(text_emb(0), os.path.join(scene_dir, "instruction.emb"))
    save_embedding(
        Embedding(values=shared.values.copy(), kind="text"),
        os.path.join(scene_dir, "object.emb"),
    )

    with open(os.path.join(root, "ground_truth.json"), "w") as fh:
        json.dump(
            {
                "expected_entry": "demo-right",
                "handle_pixel": handle_pixel.tolist(),
                "handle_point": handle_point.tolist(),
                "outward_normal": [0.0, 0.0, -1.0],
                "shift": list(SHIFT),
            },
            fh,
            indent=2,
        )
    print(f"demo workspace written to {root}/ ({len(entries)} memory entries)")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default="demo")
    parser.add_argument("--tasks", type=int, default=4)
    parser.add_argument("--per-task", type=int, default=3)
    args = parser.parse_args()
    build(args.root, args.tasks, args.per_task)
