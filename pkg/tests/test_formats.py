"""Binary format tests: byte-exact round trips and malformed-file handling."""

import struct

import numpy as np
import pytest

from affordlift import DenseFeatureMap, DepthImage, Embedding, PixelMask
from affordlift.errors import BadMagic, DimensionMismatch, TruncatedFile
from affordlift.formats import (
    load_depth,
    load_embedding,
    load_feature_map,
    load_mask,
    peek_feature_map_header,
    save_depth,
    save_embedding,
    save_feature_map,
    save_mask,
)


def rng():
    return np.random.default_rng(42)


def test_depth_round_trip_bytes(tmp_path):
    depth = DepthImage(values=rng().uniform(0.1, 5.0, size=(7, 9)).astype(np.float32))
    p1, p2 = str(tmp_path / "a.dpt"), str(tmp_path / "b.dpt")
    save_depth(depth, p1)
    save_depth(load_depth(p1), p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_depth_preserves_invalid_markers(tmp_path):
    values = np.array([[1.0, np.nan], [-2.0, np.inf]], dtype=np.float32)
    path = str(tmp_path / "d.dpt")
    save_depth(DepthImage(values=values), path)
    loaded = load_depth(path)
    assert loaded.valid_mask().tolist() == [[True, False], [False, False]]


def test_feature_map_round_trip_bytes(tmp_path):
    fmap = DenseFeatureMap(
        data=rng().normal(size=(4, 5, 6)).astype(np.float32),
        image_height=16,
        image_width=20,
        normalized=False,
    )
    p1, p2 = str(tmp_path / "a.dfm"), str(tmp_path / "b.dfm")
    save_feature_map(fmap, p1)
    loaded = load_feature_map(p1)
    assert loaded.image_height == 16 and loaded.image_width == 20
    assert not loaded.normalized
    np.testing.assert_array_equal(loaded.data, fmap.data)
    save_feature_map(loaded, p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_feature_map_normalized_flag(tmp_path):
    fmap = DenseFeatureMap(
        data=np.ones((2, 2, 3), dtype=np.float32),
        image_height=2,
        image_width=2,
        normalized=True,
    )
    path = str(tmp_path / "n.dfm")
    save_feature_map(fmap, path)
    assert load_feature_map(path).normalized


def test_peek_header_matches_full_load(tmp_path):
    fmap = DenseFeatureMap(
        data=np.zeros((3, 7, 2), dtype=np.float32), image_height=30, image_width=70
    )
    path = str(tmp_path / "h.dfm")
    save_feature_map(fmap, path)
    assert peek_feature_map_header(path) == (3, 7, 2, 30, 70)


def test_bad_magic(tmp_path):
    path = str(tmp_path / "x.dfm")
    with open(path, "wb") as fh:
        fh.write(b"XXXX" + b"\x00" * 32)
    with pytest.raises(BadMagic):
        load_feature_map(path)
    with pytest.raises(BadMagic):
        load_depth(path)
    with pytest.raises(BadMagic):
        load_embedding(path)
    with pytest.raises(BadMagic):
        load_mask(path)


def test_truncated_feature_payload(tmp_path):
    # header claims 4x4x8 = 128 floats, payload carries only 100
    path = str(tmp_path / "t.dfm")
    header = b"DFM1" + struct.pack("<IIIIIB", 4, 4, 8, 4, 4, 0)
    with open(path, "wb") as fh:
        fh.write(header + np.zeros(100, dtype="<f4").tobytes())
    with pytest.raises(TruncatedFile):
        load_feature_map(path)


def test_trailing_bytes_rejected(tmp_path):
    path = str(tmp_path / "t.dpt")
    blob = b"DPT1" + struct.pack("<II", 2, 2) + np.zeros(4, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob + b"extra")
    with pytest.raises(TruncatedFile):
        load_depth(path)


def test_zero_dimension_rejected(tmp_path):
    path = str(tmp_path / "z.dpt")
    with open(path, "wb") as fh:
        fh.write(b"DPT1" + struct.pack("<II", 0, 5))
    with pytest.raises(DimensionMismatch):
        load_depth(path)


def test_embedding_round_trip(tmp_path):
    for kind in ("image", "text"):
        emb = Embedding(values=rng().normal(size=12).astype(np.float32), kind=kind)
        p1, p2 = str(tmp_path / f"{kind}1.emb"), str(tmp_path / f"{kind}2.emb")
        save_embedding(emb, p1)
        loaded = load_embedding(p1)
        assert loaded.kind == kind
        np.testing.assert_array_equal(loaded.values, emb.values)
        save_embedding(loaded, p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()


def test_embedding_unknown_kind_byte(tmp_path):
    path = str(tmp_path / "k.emb")
    with open(path, "wb") as fh:
        fh.write(b"EMB1" + struct.pack("<BI", 7, 1) + np.zeros(1, dtype="<f4").tobytes())
    with pytest.raises(BadMagic):
        load_embedding(path)


def test_mask_round_trip_bytes(tmp_path):
    bits = rng().random((13, 10)) > 0.5  # 130 bits: exercises partial last byte
    mask = PixelMask(bits=bits)
    p1, p2 = str(tmp_path / "a.msk"), str(tmp_path / "b.msk")
    save_mask(mask, p1)
    loaded = load_mask(p1)
    np.testing.assert_array_equal(loaded.bits, bits)
    save_mask(loaded, p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_mask_bit_packing_is_msb_first(tmp_path):
    bits = np.zeros((1, 8), dtype=bool)
    bits[0, 0] = True  # first pixel -> most significant bit
    path = str(tmp_path / "m.msk")
    save_mask(PixelMask(bits=bits), path)
    blob = open(path, "rb").read()
    assert blob[-1] == 0b1000_0000


def test_mask_truncated(tmp_path):
    path = str(tmp_path / "t.msk")
    with open(path, "wb") as fh:
        fh.write(b"MSK1" + struct.pack("<II", 4, 4))  # needs 2 payload bytes
    with pytest.raises(TruncatedFile):
        load_mask(path)
