"""Extraction entry points: image -> .dfm feature maps, image/text -> .emb."""

from __future__ import annotations

import dataclasses
import json

import numpy as np
import torch
import torch.nn.functional as F

from .backends import ClipBackend, Dinov2Backend, SdDiftBackend, build_backend
from .config import ExtractorConfig
from .formats import write_embedding, write_feature_map


def _load_image(path: str):
    from PIL import Image

    with Image.open(path) as img:
        return img.convert("RGB"), img.size  # (image, (width, height))


def _resize_grid(features: np.ndarray, rows: int, cols: int) -> np.ndarray:
    if features.shape[:2] == (rows, cols):
        return features
    t = torch.from_numpy(features).permute(2, 0, 1).unsqueeze(0)
    t = F.interpolate(t, size=(rows, cols), mode="bilinear", align_corners=False)
    return t[0].permute(1, 2, 0).numpy().astype(np.float32)


def _l2_normalize(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=2, keepdims=True)
    return (features / np.where(norms == 0.0, 1.0, norms)).astype(np.float32)


def _write_sidecar(out_path: str, meta: dict) -> None:
    with open(out_path + ".json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, indent=2) + "\n")


def extract_feature_map(image_path: str, config: ExtractorConfig, out_path: str) -> dict:
    """Run the configured backbone on an image and write a .dfm file.

    The .dfm header records the image's true pixel size; a sidecar JSON
    (out_path + ".json") records the model, layer, and grid actually used.

    Returns the sidecar metadata.
    """
    torch.set_num_threads(1)  # keep repeated extraction byte-identical
    image, (width, height) = _load_image(image_path)

    if config.model == "sd-dinov2":
        # per-source L2 normalization aligns the two feature scales before
        # channel concatenation; grids are matched to the finer of the two
        sd_cfg = dataclasses.replace(config, model="sd-dift")
        dino_cfg = dataclasses.replace(config, model="dinov2")
        sd_feats, sd_meta = SdDiftBackend(sd_cfg).extract(image, sd_cfg)
        dino_feats, dino_meta = Dinov2Backend(dino_cfg).extract(image, dino_cfg)
        rows = max(sd_feats.shape[0], dino_feats.shape[0])
        cols = max(sd_feats.shape[1], dino_feats.shape[1])
        features = np.concatenate(
            [
                _l2_normalize(_resize_grid(sd_feats, rows, cols)),
                _l2_normalize(_resize_grid(dino_feats, rows, cols)),
            ],
            axis=2,
        )
        backend_meta = {"sd": sd_meta, "dinov2": dino_meta, "fused_grid": [rows, cols]}
    else:
        backend = build_backend(config)
        features, backend_meta = backend.extract(image, config)

    grid = config.output_grid()
    if grid is not None:
        features = _resize_grid(features, *grid)

    write_feature_map(out_path, features, image_height=height, image_width=width)
    meta = {
        "model": config.model,
        "weights": config.weights,
        "grid": [int(features.shape[0]), int(features.shape[1])],
        "channels": int(features.shape[2]),
        "image_size": [width, height],
        "backend": backend_meta,
    }
    _write_sidecar(out_path, meta)
    return meta


def extract_embeddings(
    source: str, kind: str, config: ExtractorConfig, out_path: str
) -> dict:
    """Write a CLIP image or text embedding as an .emb file.

    kind is "image" (source is an image path) or "text" (source is the
    string itself).  Embeddings always come from the CLIP backend, whatever
    feature model the config names.
    """
    if kind not in ("image", "text"):
        raise ValueError(f"kind must be image or text, got {kind!r}")
    torch.set_num_threads(1)
    clip_cfg = dataclasses.replace(config, model="clip")
    backend = ClipBackend(clip_cfg)
    if kind == "image":
        image, _ = _load_image(source)
        values = backend.embed_image(image, clip_cfg)
    else:
        values = backend.embed_text(source, clip_cfg)
    write_embedding(out_path, values, kind)
    meta = {
        "model": "clip",
        "weights": config.weights,
        "kind": kind,
        "dim": int(values.shape[0]),
    }
    _write_sidecar(out_path, meta)
    return meta
