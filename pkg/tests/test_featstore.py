"""Feature container / binary format tests."""
import struct

import numpy as np
import pytest

from milbench.errors import CorruptFile, FormatError, InvalidData
from milbench.featstore import (FeatureMatrix, FeatureStore, mock_encode,
                                read_features, write_features)
from milbench.preprocess import TileGrid


def matrix(rows=5, dim=3, coords=True, seed=0):
    rng = np.random.default_rng(seed)
    return FeatureMatrix(
        slide_id="slide_a", encoder_id="enc",
        data=rng.normal(size=(rows, dim)).astype(np.float32),
        coords=(rng.integers(0, 10000, size=(rows, 2)).astype(np.uint32) * 0
                + np.arange(rows * 2, dtype=np.uint32).reshape(rows, 2))
        if coords else None)


def test_roundtrip_with_and_without_coords(tmp_path):
    for coords in (True, False):
        m = matrix(coords=coords)
        path = tmp_path / f"c{coords}.feat"
        write_features(m, path)
        back = read_features(path)
        assert back == m
        assert back.data.dtype == np.float32
        if coords:
            assert back.coords.dtype == np.uint32


def test_header_layout_golden(tmp_path):
    m = FeatureMatrix(slide_id="s", encoder_id="e",
                      data=np.zeros((1, 2), dtype=np.float32))
    path = tmp_path / "g.feat"
    write_features(m, path)
    raw = path.read_bytes()
    assert raw[:4] == b"MILF"
    version, flags = struct.unpack_from("<HH", raw, 4)
    assert version == 1
    assert flags == 0  # no coords
    dim, rows = struct.unpack_from("<IQ", raw, 8)
    assert (dim, rows) == (2, 1)
    sid_len = struct.unpack_from("<H", raw, 20)[0]
    assert raw[22:22 + sid_len] == b"s"
    # header zero-padded to a 64-byte boundary, then float32 payload
    assert len(raw) == 64 + 1 * 2 * 4
    assert raw[64:] == b"\x00" * 8


def test_flags_bit0_marks_coords(tmp_path):
    m = matrix(rows=2, coords=True)
    path = tmp_path / "c.feat"
    write_features(m, path)
    raw = path.read_bytes()
    assert struct.unpack_from("<HH", raw, 4)[1] & 1
    # trailing coords block: rows x 2 x u32
    assert len(raw) % 64 == (2 * 3 * 4 + 2 * 2 * 4) % 64


def test_read_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.feat"
    path.write_bytes(b"NOPE" + b"\x00" * 100)
    with pytest.raises(FormatError):
        read_features(path)


def test_read_rejects_truncation(tmp_path):
    m = matrix()
    path = tmp_path / "t.feat"
    write_features(m, path)
    raw = path.read_bytes()
    (tmp_path / "cut.feat").write_bytes(raw[:-5])
    with pytest.raises(CorruptFile):
        read_features(tmp_path / "cut.feat")


def test_read_rejects_nan_payload(tmp_path):
    m = matrix(coords=False)
    m.data[0, 0] = 0.0
    path = tmp_path / "n.feat"
    write_features(m, path)
    raw = bytearray(path.read_bytes())
    raw[64:68] = struct.pack("<f", float("nan"))
    path.write_bytes(bytes(raw))
    with pytest.raises(InvalidData):
        read_features(path)


def test_matrix_validation():
    with pytest.raises(InvalidData):
        FeatureMatrix(slide_id="s", encoder_id="e",
                      data=np.zeros(3, dtype=np.float32))
    with pytest.raises(InvalidData):
        FeatureMatrix(slide_id="s", encoder_id="e",
                      data=np.array([[np.inf]], dtype=np.float32))
    with pytest.raises(InvalidData):
        FeatureMatrix(slide_id="s", encoder_id="e",
                      data=np.zeros((2, 2), dtype=np.float32),
                      coords=np.zeros((2, 2), dtype=np.uint32))  # duplicate


def test_mock_encode_deterministic_and_range():
    grid = TileGrid(slide_id="s", tile_px=224, target_mpp=0.5,
                    tiles=[(0, 0), (224, 0), (0, 224)],
                    tissue_frac_per_tile=[1.0, 1.0, 1.0])
    a = mock_encode(grid, dim=8, seed=1)
    b = mock_encode(grid, dim=8, seed=1)
    c = mock_encode(grid, dim=8, seed=2)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    assert a.data.shape == (3, 8)
    assert a.data.min() >= -1.0 and a.data.max() <= 1.0
    assert np.array_equal(a.coords, np.array([(0, 0), (224, 0), (0, 224)],
                                             dtype=np.uint32))


def test_mock_encode_depends_on_tile_position_not_order():
    base = TileGrid(slide_id="s", tile_px=224, target_mpp=0.5,
                    tiles=[(0, 0), (224, 0)], tissue_frac_per_tile=[1.0, 1.0])
    swapped = TileGrid(slide_id="s", tile_px=224, target_mpp=0.5,
                       tiles=[(224, 0), (0, 0)], tissue_frac_per_tile=[1.0, 1.0])
    a = mock_encode(base, dim=4, seed=0)
    b = mock_encode(swapped, dim=4, seed=0)
    assert np.array_equal(a.data[0], b.data[1])
    assert np.array_equal(a.data[1], b.data[0])


def test_store_layout_and_missing(tmp_path):
    store = FeatureStore(tmp_path)
    m = matrix()
    p = store.save(m)
    assert p == tmp_path / "enc" / "slide_a.feat"
    assert store.exists("enc", "slide_a")
    assert not store.exists("enc", "other")
    assert store.load("enc", "slide_a") == m
