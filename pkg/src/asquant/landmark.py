"""Scleral spur encoded as focus/attention label regions, and its decoding."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contours import Region, _components
from .core import ATTENTION, FOCUS, LabelMask, Palette, Point
from .errors import NoFocusRegion, TooCloseToBorder


@dataclass(frozen=True)
class LandmarkLabelConfig:
    r_focus: float = 16.0
    r_attention: float = 48.0
    ref_square_side: int | None = None

    def __post_init__(self):
        if not 0 < self.r_focus < self.r_attention:
            raise ValueError("need 0 < r_focus < r_attention")
        if self.ref_square_side is not None and self.ref_square_side < 2:
            raise ValueError("ref_square_side must be >= 2")

    @property
    def square_side(self) -> int:
        """Reference square side; defaults to the square with the focus disk's area."""
        if self.ref_square_side is not None:
            return int(self.ref_square_side)
        return max(2, int(round(self.r_focus * math.sqrt(math.pi))))


def encode_landmark(shape: tuple[int, int], spur, cfg: LandmarkLabelConfig = LandmarkLabelConfig()) -> LabelMask:
    """Landmark-palette raster of size ``shape`` = (width, height)."""
    w, h = shape
    x, y = float(spur[0]), float(spur[1])
    r = cfg.r_focus
    if x < r or y < r or x > w - 1 - r or y > h - 1 - r:
        raise TooCloseToBorder(f"spur ({x:.1f}, {y:.1f}) is closer than {r} px to the border of {w}x{h}")
    yy, xx = np.mgrid[0:h, 0:w]
    d2 = (xx - x) ** 2 + (yy - y) ** 2
    data = np.zeros((h, w), dtype=np.uint8)
    data[d2 <= cfg.r_attention**2] = ATTENTION
    data[d2 <= r**2] = FOCUS
    return LabelMask(data, Palette.LANDMARK)


def _split_width(width: int) -> int:
    return (width + 1) // 2


def split_halves(raster):
    """Left half and horizontally mirrored right half.

    Accepts a LabelMask or any 2-D array; an odd middle column goes left.
    """
    arr = raster.data if isinstance(raster, LabelMask) else np.asarray(raster)
    wl = _split_width(arr.shape[1])
    left, right = arr[:, :wl], arr[:, wl:][:, ::-1]
    if isinstance(raster, LabelMask):
        return LabelMask(left, raster.palette), LabelMask(right, raster.palette)
    return left.copy(), right.copy()


def join_halves(left, right):
    """Inverse of :func:`split_halves`."""
    la = left.data if isinstance(left, LabelMask) else np.asarray(left)
    ra = right.data if isinstance(right, LabelMask) else np.asarray(right)
    out = np.hstack([la, ra[:, ::-1]])
    if isinstance(left, LabelMask):
        return LabelMask(out, left.palette)
    return out


def unmirror_x(x_half: float, full_width: int) -> float:
    """Map an x coordinate in the mirrored right half back to the full image."""
    return full_width - 1 - x_half


def mirror_x(x_full: float, full_width: int) -> float:
    return full_width - 1 - x_full


def decode_spur(pred: LabelMask) -> tuple[Point, Region]:
    """Centroid of the largest 8-connected focus region and the region itself."""
    if pred.palette is not Palette.LANDMARK:
        raise ValueError("decode_spur needs a landmark-palette mask")
    regions = _components(pred.data == FOCUS, 8)
    if not regions:
        raise NoFocusRegion("prediction has no focus pixels")
    best = regions[0]
    return best.centroid, best


def reference_square(centroid, side: int) -> tuple[int, int, int, int]:
    """Inclusive pixel bounds (x0, y0, x1, y1) of the ``side``-pixel square
    centred on ``centroid``; the half-open rule gives exactly ``side`` pixels
    per axis."""
    cx, cy = float(centroid[0]), float(centroid[1])
    x0 = math.ceil(cx - side / 2.0)
    y0 = math.ceil(cy - side / 2.0)
    return x0, y0, x0 + side - 1, y0 + side - 1


def confidence_index(focus_pixels, centroid, ref_square_side: int) -> float:
    """IoU between the focus pixels and the reference square on ``centroid``."""
    pix = focus_pixels.pixels if isinstance(focus_pixels, Region) else np.asarray(focus_pixels).reshape(-1, 2)
    if len(pix) == 0:
        raise NoFocusRegion("empty focus set")
    pix = np.unique(pix, axis=0)
    x0, y0, x1, y1 = reference_square(centroid, int(ref_square_side))
    inside = (pix[:, 0] >= x0) & (pix[:, 0] <= x1) & (pix[:, 1] >= y0) & (pix[:, 1] <= y1)
    inter = int(inside.sum())
    union = len(pix) + int(ref_square_side) ** 2 - inter
    return inter / union


def spur_from_halves(left: LabelMask, right: LabelMask, full_width: int, cfg: LandmarkLabelConfig = LandmarkLabelConfig()):
    """Decode both half-image predictions into full-image points and confidences."""
    pl, reg_l = decode_spur(left)
    pr, reg_r = decode_spur(right)
    cl = confidence_index(reg_l, pl, cfg.square_side)
    cr = confidence_index(reg_r, pr, cfg.square_side)
    return Point(pl.x, pl.y), Point(unmirror_x(pr.x, full_width), pr.y), cl, cr
