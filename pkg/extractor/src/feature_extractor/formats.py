"""Writers for the pipeline's binary wire formats (.dfm and .emb).

These mirror the consumer's documented layouts byte for byte; the exporter
depends on the formats, not on the consumer package.

    .dfm  "DFM1"  u32 gridH, gridW, channels, imageH, imageW; u8 flags
                  (bit 0 = normalized); floats row-major, channel-fastest
    .emb  "EMB1"  u8 kind (0 image, 1 text); u32 dim; dim float32
"""

from __future__ import annotations

import os
import struct

import numpy as np

FEATURE_MAGIC = b"DFM1"
EMBEDDING_MAGIC = b"EMB1"

KIND_CODES = {"image": 0, "text": 1}


def _atomic_write(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_feature_map(
    path: str,
    features: np.ndarray,
    image_height: int,
    image_width: int,
    normalized: bool = False,
) -> None:
    """Write an (H, W, C) float array as a .dfm file.

    image_height/image_width must be the true pixel size of the source
    image, not the model's input resolution.
    """
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 3:
        raise ValueError(f"features must be (H, W, C), got {features.shape}")
    h, w, c = features.shape
    header = FEATURE_MAGIC + struct.pack(
        "<IIIIIB", h, w, c, image_height, image_width, 1 if normalized else 0
    )
    _atomic_write(path, header + features.tobytes())


def write_embedding(path: str, values: np.ndarray, kind: str) -> None:
    values = np.ascontiguousarray(values, dtype="<f4").reshape(-1)
    header = EMBEDDING_MAGIC + struct.pack("<BI", KIND_CODES[kind], values.shape[0])
    _atomic_write(path, header + values.tobytes())
