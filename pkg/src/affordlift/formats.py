"""Binary file formats for depth maps, feature maps, embeddings, and masks.

All formats are little-endian with a 4-byte ASCII magic.  Loads validate
length exactly, so save(load(f)) reproduces the input bytes and
load(save(x)) reproduces x bit for bit.

    .dpt  "DPT1"  u32 height, u32 width, h*w float32 (row-major, meters)
    .dfm  "DFM1"  u32 gridH, gridW, channels, imageH, imageW; u8 flags
                  (bit 0 = normalized); h*w*c float32 (row-major,
                  channel-fastest)
    .emb  "EMB1"  u8 kind (0 image, 1 text); u32 dim; dim float32
    .msk  "MSK1"  u32 height, width; ceil(h*w/8) bytes, row-major
                  bit-packed, MSB first
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import BadMagic, DimensionMismatch, TruncatedFile
from .features import DenseFeatureMap, Embedding, PixelMask
from .geometry import DepthImage

DEPTH_MAGIC = b"DPT1"
FEATURE_MAGIC = b"DFM1"
EMBEDDING_MAGIC = b"EMB1"
MASK_MAGIC = b"MSK1"

_FLAG_NORMALIZED = 0x01


def _read_exact(blob: bytes, offset: int, count: int, path: str, what: str) -> bytes:
    if offset + count > len(blob):
        raise TruncatedFile(
            f"{path}: need {count} bytes for {what} at offset {offset}, "
            f"file has {len(blob)}"
        )
    return blob[offset : offset + count]


def _check_magic(blob: bytes, magic: bytes, path: str) -> None:
    got = _read_exact(blob, 0, 4, path, "magic")
    if got != magic:
        raise BadMagic(f"{path}: expected magic {magic!r}, found {got!r}")


def _check_no_trailing(blob: bytes, expected_len: int, path: str) -> None:
    if len(blob) != expected_len:
        raise TruncatedFile(
            f"{path}: expected {expected_len} bytes total, file has {len(blob)}"
        )


def _atomic_write(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


# -- depth (.dpt) -----------------------------------------------------------

def save_depth(depth: DepthImage, path: str) -> None:
    header = DEPTH_MAGIC + struct.pack("<II", depth.height, depth.width)
    payload = np.ascontiguousarray(depth.values, dtype="<f4").tobytes()
    _atomic_write(path, header + payload)


def load_depth(path: str) -> DepthImage:
    with open(path, "rb") as fh:
        blob = fh.read()
    _check_magic(blob, DEPTH_MAGIC, path)
    h, w = struct.unpack("<II", _read_exact(blob, 4, 8, path, "dimensions"))
    if h == 0 or w == 0:
        raise DimensionMismatch(f"{path}: zero-sized depth image {h}x{w}")
    payload = _read_exact(blob, 12, h * w * 4, path, "depth values")
    _check_no_trailing(blob, 12 + h * w * 4, path)
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w)
    return DepthImage(values=values.copy())


# -- dense feature maps (.dfm) ----------------------------------------------

def save_feature_map(fmap: DenseFeatureMap, path: str) -> None:
    h, w, c = fmap.data.shape
    flags = _FLAG_NORMALIZED if fmap.normalized else 0
    header = FEATURE_MAGIC + struct.pack(
        "<IIIIIB", h, w, c, fmap.image_height, fmap.image_width, flags
    )
    payload = np.ascontiguousarray(fmap.data, dtype="<f4").tobytes()
    _atomic_write(path, header + payload)


def load_feature_map(path: str) -> DenseFeatureMap:
    with open(path, "rb") as fh:
        blob = fh.read()
    _check_magic(blob, FEATURE_MAGIC, path)
    h, w, c, img_h, img_w, flags = struct.unpack(
        "<IIIIIB", _read_exact(blob, 4, 21, path, "header")
    )
    if min(h, w, c, img_h, img_w) == 0:
        raise DimensionMismatch(
            f"{path}: zero dimension in header {h}x{w}x{c} (image {img_h}x{img_w})"
        )
    if flags & ~_FLAG_NORMALIZED:
        raise BadMagic(f"{path}: unsupported flags byte 0x{flags:02x}")
    payload = _read_exact(blob, 25, h * w * c * 4, path, "feature values")
    _check_no_trailing(blob, 25 + h * w * c * 4, path)
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    return DenseFeatureMap(
        data=data.copy(),
        image_height=img_h,
        image_width=img_w,
        normalized=bool(flags & _FLAG_NORMALIZED),
    )


def peek_feature_map_header(path: str) -> tuple[int, int, int, int, int]:
    """Read only the .dfm header: (gridH, gridW, channels, imageH, imageW)."""
    with open(path, "rb") as fh:
        blob = fh.read(25)
    _check_magic(blob, FEATURE_MAGIC, path)
    h, w, c, img_h, img_w, _ = struct.unpack(
        "<IIIIIB", _read_exact(blob, 4, 21, path, "header")
    )
    return h, w, c, img_h, img_w


# -- embeddings (.emb) -------------------------------------------------------

_KIND_CODES = {"image": 0, "text": 1}
_KIND_NAMES = {0: "image", 1: "text"}


def save_embedding(embedding: Embedding, path: str) -> None:
    header = EMBEDDING_MAGIC + struct.pack(
        "<BI", _KIND_CODES[embedding.kind], embedding.values.shape[0]
    )
    payload = np.ascontiguousarray(embedding.values, dtype="<f4").tobytes()
    _atomic_write(path, header + payload)


def load_embedding(path: str) -> Embedding:
    with open(path, "rb") as fh:
        blob = fh.read()
    _check_magic(blob, EMBEDDING_MAGIC, path)
    kind_code, dim = struct.unpack("<BI", _read_exact(blob, 4, 5, path, "header"))
    if kind_code not in _KIND_NAMES:
        raise BadMagic(f"{path}: unknown embedding kind byte {kind_code}")
    if dim == 0:
        raise DimensionMismatch(f"{path}: zero-dimensional embedding")
    payload = _read_exact(blob, 9, dim * 4, path, "embedding values")
    _check_no_trailing(blob, 9 + dim * 4, path)
    values = np.frombuffer(payload, dtype="<f4").copy()
    return Embedding(values=values, kind=_KIND_NAMES[kind_code])


# -- pixel masks (.msk) --------------------------------------------------------

def save_mask(mask: PixelMask, path: str) -> None:
    h, w = mask.bits.shape
    header = MASK_MAGIC + struct.pack("<II", h, w)
    packed = np.packbits(mask.bits.reshape(-1), bitorder="big").tobytes()
    _atomic_write(path, header + packed)


def load_mask(path: str) -> PixelMask:
    with open(path, "rb") as fh:
        blob = fh.read()
    _check_magic(blob, MASK_MAGIC, path)
    h, w = struct.unpack("<II", _read_exact(blob, 4, 8, path, "dimensions"))
    if h == 0 or w == 0:
        raise DimensionMismatch(f"{path}: zero-sized mask {h}x{w}")
    nbytes = (h * w + 7) // 8
    payload = _read_exact(blob, 12, nbytes, path, "mask bits")
    _check_no_trailing(blob, 12 + nbytes, path)
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="big")
    bits = bits[: h * w].astype(bool).reshape(h, w)
    return PixelMask(bits=bits)
