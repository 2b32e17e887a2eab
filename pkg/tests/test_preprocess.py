"""Tissue mask and tiling unit tests."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from milbench.errors import (DegenerateHistogram, InvalidInput,
                             UnsupportedResolution)
from milbench.preprocess import (DEFAULT_PEN_RANGES, SlideGeometry, Thumbnail,
                                 TissueMask, build_tissue_mask,
                                 default_downsample, effective_mpp,
                                 enumerate_tiles, gaussian_blur5,
                                 otsu_threshold, pen_mask, read_tile_grid_csv,
                                 rgb_to_hsv, write_tile_grid_csv)


# ---------------------------------------------------------------- blur

def test_blur_impulse_center_weight():
    img = np.zeros((9, 9))
    img[4, 4] = 256.0
    out = gaussian_blur5(img)
    # center of the separable [1,4,6,4,1]/16 kernel: (6/16)^2 * 256 = 36
    assert out[4, 4] == pytest.approx(36.0)
    assert out[4, 3] == pytest.approx(256 * (6 * 4) / 256)
    assert out[2, 2] == pytest.approx(256 * (1 * 1) / 256)
    assert out.sum() == pytest.approx(256.0)  # kernel is normalized


def test_blur_constant_image_unchanged():
    img = np.full((7, 5), 123, dtype=np.uint8)
    assert (gaussian_blur5(img) == 123).all()


def test_blur_preserves_integer_dtype_and_range():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
    out = gaussian_blur5(img)
    assert out.dtype == np.uint8
    assert out.shape == img.shape


def test_blur_edge_replication_not_wraparound():
    # a hot left edge must not bleed into the right edge
    img = np.zeros((8, 8))
    img[:, 0] = 1000.0
    out = gaussian_blur5(img)
    assert (out[:, -1] == 0).all()
    assert out[4, 0] > out[4, 1] > 0


def test_blur_rejects_empty():
    with pytest.raises(InvalidInput):
        gaussian_blur5(np.zeros((0, 4)))


# ---------------------------------------------------------------- otsu

def brute_otsu(hist):
    total = hist.sum()
    best_t, best_v = None, -1.0
    levels = np.arange(hist.size, dtype=np.float64)
    for t in range(hist.size - 1):
        w0 = hist[: t + 1].sum()
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        mu0 = (levels[: t + 1] * hist[: t + 1]).sum() / w0
        mu1 = (levels[t + 1:] * hist[t + 1:]).sum() / w1
        v = (w0 / total) * (w1 / total) * (mu0 - mu1) ** 2
        if v > best_v:
            best_v, best_t = v, t
    return best_t


def test_otsu_bimodal():
    hist = np.zeros(256, dtype=np.int64)
    hist[40:60] = 100
    hist[200:220] = 100
    t = otsu_threshold(hist)
    assert 59 <= t < 200
    assert t == brute_otsu(hist)


def test_otsu_degenerate():
    hist = np.zeros(256, dtype=np.int64)
    hist[128] = 500
    with pytest.raises(DegenerateHistogram):
        otsu_threshold(hist)
    with pytest.raises(DegenerateHistogram):
        otsu_threshold(np.zeros(256, dtype=np.int64))


def test_otsu_two_levels():
    hist = np.zeros(256, dtype=np.int64)
    hist[10] = 7
    hist[250] = 3
    assert otsu_threshold(hist) == brute_otsu(hist)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_otsu_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    hist = rng.integers(0, 50, size=256).astype(np.int64)
    if np.count_nonzero(hist) < 2:
        return
    assert otsu_threshold(hist) == brute_otsu(hist)


# ---------------------------------------------------------------- hsv / pen

def test_rgb_to_hsv_primaries():
    px = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255],
                    [0, 0, 0], [255, 255, 255]]], dtype=np.uint8)
    h, s, v = rgb_to_hsv(px)
    assert h[0, 0] == pytest.approx(0.0)
    assert h[0, 1] == pytest.approx(120.0)
    assert h[0, 2] == pytest.approx(240.0)
    assert v[0, 3] == pytest.approx(0.0)
    assert s[0, 4] == pytest.approx(0.0) and v[0, 4] == pytest.approx(1.0)


def test_pen_mask_flags_blue_green_black():
    px = np.zeros((2, 3, 3), dtype=np.uint8)
    px[0, 0] = (30, 60, 200)    # blue pen
    px[0, 1] = (40, 180, 40)    # green pen
    px[0, 2] = (10, 10, 10)     # black pen
    px[1, 0] = (230, 180, 190)  # pink tissue
    px[1, 1] = (250, 250, 250)  # background
    px[1, 2] = (200, 60, 60)    # red-ish: not a pen color
    mask = pen_mask(Thumbnail(pixels=px, downsample=1.0))
    assert mask[0].all()
    assert not mask[1].any()


def test_pen_ranges_defaults_documented():
    assert DEFAULT_PEN_RANGES["blue"]["h"] == (200.0, 260.0)
    assert DEFAULT_PEN_RANGES["black"]["v_max"] == 0.20


# ---------------------------------------------------------------- mask

def tissue_thumb(h=64, w=64):
    """Pink tissue on a bright background."""
    px = np.full((h, w, 3), 245, dtype=np.uint8)
    px[8:56, 8:56] = (210, 160, 180)
    return Thumbnail(pixels=px, downsample=1.0)


def test_build_tissue_mask_finds_tissue():
    mask = build_tissue_mask(tissue_thumb())
    assert not mask.degenerate
    inner = mask.bits[12:52, 12:52]
    assert inner.mean() > 0.95
    assert mask.bits[0:4, 0:4].mean() < 0.05


def test_build_tissue_mask_excludes_pen():
    thumb = tissue_thumb()
    thumb.pixels[16:40, 16:24] = (30, 60, 200)  # blue pen over tissue
    mask = build_tissue_mask(thumb)
    assert mask.bits[20:36, 18:22].mean() < 0.05
    assert mask.bits[20:44, 36:52].mean() > 0.9


def test_build_tissue_mask_degenerate_blank():
    blank = Thumbnail(pixels=np.full((32, 32, 3), 250, dtype=np.uint8),
                      downsample=1.0)
    with pytest.warns(UserWarning):
        mask = build_tissue_mask(blank)
    assert mask.degenerate
    assert not mask.bits.any()


# ---------------------------------------------------------------- tiling

def geom(w=4480, h=4480, mpp=0.5):
    return SlideGeometry(slide_id="s", width_px=w, height_px=h, base_mpp=mpp)


def full_mask(g, ds):
    shape = (int(np.ceil(g.height_px / ds)), int(np.ceil(g.width_px / ds)))
    return TissueMask(bits=np.ones(shape, dtype=bool))


def test_enumerate_tiles_row_major_and_count():
    g = geom(1000, 500, 0.5)
    ds = 4.0
    grid = enumerate_tiles(full_mask(g, ds), g, ds)
    # level 1, footprint 224: 4 cols x 2 rows
    assert len(grid) == 8
    assert grid.tiles[0] == (0, 0)
    assert grid.tiles[1] == (224, 0)
    assert grid.tiles[4] == (0, 224)
    assert all(f == 1.0 for f in grid.tissue_frac_per_tile)


def test_enumerate_tiles_level_selection():
    g = geom(2240, 2240, 0.25)  # level 2 -> footprint 448
    grid = enumerate_tiles(full_mask(g, 4.0), g, 4.0)
    assert len(grid) == 25
    assert effective_mpp(g) == pytest.approx(0.5)


def test_enumerate_tiles_rejects_finer_than_base():
    g = geom(mpp=1.0)
    with pytest.raises(UnsupportedResolution):
        enumerate_tiles(full_mask(g, 4.0), g, 4.0, target_mpp=0.5)


def test_enumerate_tiles_min_frac_filter():
    g = geom(448, 224, 0.5)
    ds = 2.0
    bits = np.ones((112, 224), dtype=bool)
    bits[:, 112:] = False  # right tile has zero tissue
    grid = enumerate_tiles(TissueMask(bits=bits), g, ds, min_tissue_frac=0.25)
    assert grid.tiles == [(0, 0)]


def test_default_downsample():
    assert default_downsample(geom(4096, 2048)) == pytest.approx(2.0)
    assert default_downsample(geom(100, 100)) == 1.0


def test_tile_grid_csv_roundtrip(tmp_path):
    g = geom(1000, 500, 0.5)
    grid = enumerate_tiles(full_mask(g, 4.0), g, 4.0)
    path = tmp_path / "s.tiles.csv"
    write_tile_grid_csv(grid, path, header_comment="milbench test")
    back = read_tile_grid_csv(path)
    assert back.slide_id == grid.slide_id
    assert back.tiles == grid.tiles
    assert back.tile_px == grid.tile_px
    assert back.target_mpp == pytest.approx(grid.target_mpp)
    assert np.allclose(back.tissue_frac_per_tile, grid.tissue_frac_per_tile)


def test_geometry_validation():
    with pytest.raises(InvalidInput):
        SlideGeometry(slide_id="x", width_px=0, height_px=10, base_mpp=0.5)
    with pytest.raises(InvalidInput):
        SlideGeometry(slide_id="x", width_px=10, height_px=10, base_mpp=0.0)
