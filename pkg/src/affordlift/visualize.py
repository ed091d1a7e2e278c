"""Deterministic overlay rendering of 2D affordances onto RGB images.

Markers are rasterized directly into the pixel array (no font/AA library),
and PNGs are encoded with a minimal fixed-parameter writer, so rendering
the same affordance twice produces byte-identical files.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .transfer import Affordance2D

CONTACT_COLOR = (230, 40, 40)
INLIER_COLOR = (250, 220, 40)
OUTLIER_COLOR = (140, 140, 140)
ARROW_COLOR = (40, 200, 230)

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def write_png(path: str, image: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as an RGB8 PNG (fixed zlib level)."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) uint8 image, got {image.shape}")
    h, w = image.shape[:2]

    def chunk(tag: bytes, payload: bytes) -> bytes:
        return (
            struct.pack(">I", len(payload))
            + tag
            + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    raw = b"".join(b"\x00" + image[row].tobytes() for row in range(h))
    idat = zlib.compress(raw, 6)
    blob = (
        _PNG_SIGNATURE
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", idat)
        + chunk(b"IEND", b"")
    )
    with open(path, "wb") as fh:
        fh.write(blob)


def read_image(path: str) -> np.ndarray:
    """Read any PIL-supported image as an (H, W, 3) uint8 RGB array."""
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _paint_disc(image: np.ndarray, u: float, v: float, radius: int, color) -> None:
    h, w = image.shape[:2]
    u0, v0 = int(round(u)), int(round(v))
    for dv in range(-radius, radius + 1):
        for du in range(-radius, radius + 1):
            if du * du + dv * dv <= radius * radius:
                x, y = u0 + du, v0 + dv
                if 0 <= x < w and 0 <= y < h:
                    image[y, x] = color


def _paint_square(image: np.ndarray, u: float, v: float, half: int, color) -> None:
    h, w = image.shape[:2]
    u0, v0 = int(round(u)), int(round(v))
    x0, x1 = max(u0 - half, 0), min(u0 + half, w - 1)
    y0, y1 = max(v0 - half, 0), min(v0 + half, h - 1)
    if x0 <= x1 and y0 <= y1:
        image[y0 : y1 + 1, x0 : x1 + 1] = color


def _paint_segment(image: np.ndarray, p0, p1, color) -> None:
    h, w = image.shape[:2]
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    steps = int(np.ceil(np.linalg.norm(p1 - p0) * 2)) + 1
    for t in np.linspace(0.0, 1.0, steps):
        x, y = np.round(p0 + t * (p1 - p0)).astype(int)
        if 0 <= x < w and 0 <= y < h:
            image[y, x] = color


def render_overlay(
    image: np.ndarray, a2d: Affordance2D, arrow_length: float = 40.0
) -> np.ndarray:
    """Draw waypoints, the contact point, and the direction ray onto a copy."""
    out = np.array(image, dtype=np.uint8, copy=True)
    for (u, v), inlier in zip(a2d.waypoints, a2d.inliers):
        _paint_square(out, u, v, 1, INLIER_COLOR if inlier else OUTLIER_COLOR)

    tip = a2d.contact + arrow_length * a2d.direction
    _paint_segment(out, a2d.contact, tip, ARROW_COLOR)
    # two short head strokes at +/- 150 degrees from the direction
    for angle in (2.617993877991494, -2.617993877991494):
        c, s = np.cos(angle), np.sin(angle)
        head_dir = np.array(
            [
                c * a2d.direction[0] - s * a2d.direction[1],
                s * a2d.direction[0] + c * a2d.direction[1],
            ]
        )
        _paint_segment(out, tip, tip + 10.0 * head_dir, ARROW_COLOR)

    _paint_disc(out, a2d.contact[0], a2d.contact[1], 3, CONTACT_COLOR)
    return out
