"""Slide thumbnail -> tissue mask -> valid tile coordinates.

Pipeline: 5x5 binomial blur, grayscale, Otsu split (tissue = darker
class), HSV pen-mark exclusion, then a non-overlapping grid of tile
coordinates whose footprints meet a minimum tissue fraction.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (DegenerateHistogram, InvalidInput, ShapeError,
                     UnsupportedResolution)

TILE_PX = 224
TARGET_MPP = 0.5
MIN_TISSUE_FRAC = 0.25

# HSV pen exclusion ranges; hue in degrees [0, 360), s and v in [0, 1].
DEFAULT_PEN_RANGES = {
    "blue": {"h": (200.0, 260.0), "s_min": 0.30, "v_min": 0.20},
    "green": {"h": (80.0, 160.0), "s_min": 0.30, "v_min": 0.20},
    "black": {"v_max": 0.20},
}


@dataclass
class SlideGeometry:
    slide_id: str
    width_px: int
    height_px: int
    base_mpp: float

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise InvalidInput("slide extent must be positive")
        if not 0 < self.base_mpp <= 10:
            raise InvalidInput("base_mpp must be in (0, 10]")

    @classmethod
    def from_json(cls, path: str | Path) -> "SlideGeometry":
        doc = json.loads(Path(path).read_text())
        return cls(slide_id=doc["slide_id"], width_px=int(doc["width_px"]),
                   height_px=int(doc["height_px"]), base_mpp=float(doc["base_mpp"]))


@dataclass
class Thumbnail:
    pixels: np.ndarray  # (H, W, 3) uint8
    downsample: float   # base pixels per thumbnail pixel

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.size == 0:
            raise InvalidInput("thumbnail must be a nonempty HxWx3 array")
        if self.downsample <= 0:
            raise InvalidInput("downsample must be positive")


@dataclass
class TissueMask:
    bits: np.ndarray  # (H, W) bool, aligned to the thumbnail
    degenerate: bool = False

    @property
    def tissue_fraction(self) -> float:
        return float(self.bits.mean()) if self.bits.size else 0.0


@dataclass
class TileGrid:
    slide_id: str
    tile_px: int
    target_mpp: float
    tiles: list[tuple[int, int]] = field(default_factory=list)
    tissue_frac_per_tile: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tiles)


def gaussian_blur5(image: np.ndarray) -> np.ndarray:
    """Separable 5x5 binomial blur ([1,4,6,4,1]/16 per axis), edges replicated.

    Integer inputs are rounded back to the input dtype; floats pass through.
    """
    image = np.asarray(image)
    if image.size == 0:
        raise InvalidInput("empty image")
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    work = image.astype(np.float64)
    padded = np.pad(work, [(2, 2), (2, 2)] + [(0, 0)] * (work.ndim - 2),
                    mode="edge")
    for axis in (0, 1):
        padded = (
            kernel[0] * np.roll(padded, 2, axis=axis)
            + kernel[1] * np.roll(padded, 1, axis=axis)
            + kernel[2] * padded
            + kernel[3] * np.roll(padded, -1, axis=axis)
            + kernel[4] * np.roll(padded, -2, axis=axis)
        )
    out = padded[2:-2, 2:-2]
    if np.issubdtype(image.dtype, np.integer):
        info = np.iinfo(image.dtype)
        return np.clip(np.rint(out), info.min, info.max).astype(image.dtype)
    return out.astype(image.dtype)


def otsu_threshold(histogram: np.ndarray) -> int:
    """Threshold t in [0, 255] maximizing between-class variance of
    classes [0..t] and [t+1..255]; smallest t wins ties."""
    hist = np.asarray(histogram, dtype=np.float64)
    if hist.shape != (256,) or np.any(hist < 0):
        raise InvalidInput("histogram must be 256 nonnegative counts")
    total = hist.sum()
    if total <= 0 or np.count_nonzero(hist) < 2:
        raise DegenerateHistogram("need at least two occupied gray levels")
    levels = np.arange(256)
    w0 = np.cumsum(hist)                       # counts in [0..t]
    m0 = np.cumsum(hist * levels)              # weighted sums in [0..t]
    w1 = total - w0
    mu0 = np.divide(m0, w0, out=np.zeros(256), where=w0 > 0)
    mu1 = np.divide(m0[-1] - m0, w1, out=np.zeros(256), where=w1 > 0)
    var_between = w0 * w1 * (mu0 - mu1) ** 2   # common total**2 factor dropped
    var_between[w1 == 0] = -1.0                # single-class splits are invalid
    return int(np.argmax(var_between))


def rgb_to_hsv(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standard RGB->HSV; hue in degrees [0, 360), s and v in [0, 1]."""
    rgb = np.asarray(pixels, dtype=np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)
    h = np.zeros_like(v)
    nz = c > 0
    rmax = nz & (v == r)
    gmax = nz & (v == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    h[rmax] = np.mod((g - b)[rmax] / c[rmax], 6.0)
    h[gmax] = (b - r)[gmax] / c[gmax] + 2.0
    h[bmax] = (r - g)[bmax] / c[bmax] + 4.0
    return h * 60.0, s, v


def pen_mask(image: Thumbnail, ranges: dict | None = None) -> np.ndarray:
    """True where a pixel falls in a configured blue/green/black pen range."""
    if ranges is None:
        ranges = DEFAULT_PEN_RANGES
    h, s, v = rgb_to_hsv(image.pixels)
    mask = np.zeros(h.shape, dtype=bool)
    for name, spec in ranges.items():
        if "h" in spec:
            lo, hi = spec["h"]
            hit = (h >= lo) & (h <= hi)
            hit &= s >= spec.get("s_min", 0.0)
            hit &= v >= spec.get("v_min", 0.0)
        else:
            hit = v < spec.get("v_max", 0.0)
        mask |= hit
    return mask


def build_tissue_mask(image: Thumbnail, pen_ranges: dict | None = None) -> TissueMask:
    """Blur, grayscale, Otsu (tissue = darker class), pen exclusion.

    A degenerate histogram (e.g. an all-white slide) yields an all-false
    mask flagged as degenerate instead of failing the batch.
    """
    blurred = gaussian_blur5(image.pixels)
    gray = np.rint(0.299 * blurred[..., 0].astype(np.float64)
                   + 0.587 * blurred[..., 1]
                   + 0.114 * blurred[..., 2]).astype(np.int64)
    gray = np.clip(gray, 0, 255)
    hist = np.bincount(gray.ravel(), minlength=256)[:256]
    try:
        t = otsu_threshold(hist)
    except DegenerateHistogram:
        warnings.warn(f"degenerate histogram: all-false mask", stacklevel=2)
        return TissueMask(bits=np.zeros(gray.shape, dtype=bool), degenerate=True)
    tissue = (gray <= t) & ~pen_mask(image, pen_ranges)
    return TissueMask(bits=tissue)


def enumerate_tiles(mask: TissueMask, geom: SlideGeometry, downsample: float,
                    tile_px: int = TILE_PX, target_mpp: float = TARGET_MPP,
                    min_tissue_frac: float = MIN_TISSUE_FRAC) -> TileGrid:
    """Row-major non-overlapping grid of base-level tile origins.

    The integer pyramid level closest to target_mpp/base_mpp is used; a
    tile is kept iff its footprint projected onto the mask has tissue
    fraction >= min_tissue_frac.
    """
    if not 0 <= min_tissue_frac <= 1:
        raise InvalidInput("min_tissue_frac must be in [0, 1]")
    if target_mpp < geom.base_mpp:
        raise UnsupportedResolution(
            f"target {target_mpp} mpp finer than base {geom.base_mpp} mpp")
    level = max(1, round(target_mpp / geom.base_mpp))
    footprint = tile_px * level  # tile side in base pixels
    grid = TileGrid(slide_id=geom.slide_id, tile_px=tile_px, target_mpp=target_mpp)
    n_cols = geom.width_px // footprint
    n_rows = geom.height_px // footprint
    mh, mw = mask.bits.shape
    for row in range(n_rows):
        for col in range(n_cols):
            x = col * footprint
            y = row * footprint
            mx0 = int(np.floor(x / downsample))
            my0 = int(np.floor(y / downsample))
            mx1 = min(int(np.ceil((x + footprint) / downsample)), mw)
            my1 = min(int(np.ceil((y + footprint) / downsample)), mh)
            window = mask.bits[my0:my1, mx0:mx1]
            frac = float(window.mean()) if window.size else 0.0
            if frac >= min_tissue_frac:
                grid.tiles.append((x, y))
                grid.tissue_frac_per_tile.append(frac)
    return grid


def effective_mpp(geom: SlideGeometry, target_mpp: float = TARGET_MPP) -> float:
    """MPP of the integer pyramid level actually used for tiling."""
    return geom.base_mpp * max(1, round(target_mpp / geom.base_mpp))


def default_downsample(geom: SlideGeometry, long_side: int = 2048) -> float:
    """Thumbnail scale so the long side lands on ``long_side`` pixels."""
    return max(1.0, max(geom.width_px, geom.height_px) / long_side)


def write_tile_grid_csv(grid: TileGrid, path: str | Path,
                        header_comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["slide_id", "x", "y", "tile_px", "target_mpp", "tissue_frac"])
        for (x, y), frac in zip(grid.tiles, grid.tissue_frac_per_tile):
            writer.writerow([grid.slide_id, x, y, grid.tile_px, grid.target_mpp,
                             repr(frac)])


def read_tile_grid_csv(path: str | Path) -> TileGrid:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(ln for ln in fh if not ln.startswith("#"))]
    header, rows = rows[0], rows[1:]
    expected = ["slide_id", "x", "y", "tile_px", "target_mpp", "tissue_frac"]
    if header != expected:
        raise InvalidInput(f"{path}: unexpected tile grid header {header}")
    if not rows:
        raise InvalidInput(f"{path}: tile grid has no rows")
    grid = TileGrid(slide_id=rows[0][0], tile_px=int(rows[0][3]),
                    target_mpp=float(rows[0][4]))
    for r in rows:
        grid.tiles.append((int(r[1]), int(r[2])))
        grid.tissue_frac_per_tile.append(float(r[5]))
    return grid


def write_mask_png(mask: TissueMask, path: str | Path) -> None:
    from PIL import Image

    img = Image.fromarray((mask.bits.astype(np.uint8)) * 255, mode="L")
    img.save(path, format="PNG")


def load_thumbnail_png(path: str | Path, geom: SlideGeometry) -> Thumbnail:
    from PIL import Image

    with Image.open(path) as img:
        pixels = np.asarray(img.convert("RGB"))
    downsample = geom.width_px / pixels.shape[1]
    expected_h = geom.height_px / downsample
    if abs(expected_h - pixels.shape[0]) > 1.0:
        raise ShapeError(
            f"{path}: thumbnail aspect does not match geometry sidecar")
    return Thumbnail(pixels=pixels, downsample=downsample)
