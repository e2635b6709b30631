"""Search-region cropping, hand-crafted feature channels, patch geometry.

The tracker works in a crop around the previous center ("search
region").  Within the crop, feature pixels coincide with image pixels
(stride 1), so crop coordinates and feature coordinates are the same
thing.  The default channel set is 9 planes: normalized grayscale, x/y
gradients, and 6 soft orientation bins; any extractor with the same
FeatureStack layout can be plugged in instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

GRAY_CH = 0
GX_CH = 1
GY_CH = 2


@dataclass
class CoordMap:
    """Invertible crop <-> frame translation (pure integer offset)."""

    x0: int
    y0: int

    def to_frame(self, p):
        return (p[0] + self.x0, p[1] + self.y0)

    def to_crop(self, p):
        return (p[0] - self.x0, p[1] - self.y0)


@dataclass
class FeatureStack:
    """(H, W, C) float64 feature planes plus channel bookkeeping."""

    data: np.ndarray
    grad_channels: tuple = (GX_CH, GY_CH)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


@dataclass(frozen=True)
class PatchGeometry:
    """Square patch at `center` (feature coords) with displacement from
    the object center recorded at selection time."""

    cx: int
    cy: int
    side: int
    dx: float
    dy: float
    scale_index: int

    @property
    def top_left(self):
        return (self.cx - self.side // 2, self.cy - self.side // 2)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """uint8 image (H,W) or (H,W,3) -> float64 grayscale in [0, 1]."""
    arr = np.asarray(img)
    if arr.ndim == 3:
        if arr.shape[2] != 3:
            raise InvalidInputError(f"expected 1 or 3 channels, got shape {arr.shape}")
        g = arr.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    elif arr.ndim == 2:
        g = arr.astype(np.float64)
    else:
        raise InvalidInputError(f"expected 2-D or 3-D image, got shape {arr.shape}")
    return g / 255.0


def extract_channels(img: np.ndarray, n_orient: int = 6,
                     variance_floor: float = 1e-6) -> FeatureStack:
    """Build the default 9-channel stack from an image region.

    Channels: grayscale, x-gradient, y-gradient, then `n_orient` soft
    orientation bins (gradient magnitude split linearly between the two
    nearest unsigned-orientation bin centers).  Every channel is
    standardized over the region with a variance floor of 1e-6.
    """
    gray = to_grayscale(img)
    h, w = gray.shape
    if h < 16 or w < 16:
        raise InvalidInputError(f"image region too small: {w}x{h} (min 16x16)")
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)  # unsigned orientation

    planes = [gray, gx, gy]
    width = np.pi / n_orient
    t = theta / width - 0.5
    lower = np.floor(t).astype(np.intp)
    frac = t - lower
    lo = np.mod(lower, n_orient)
    hi = np.mod(lower + 1, n_orient)
    for b in range(n_orient):
        plane = mag * ((lo == b) * (1.0 - frac) + (hi == b) * frac)
        planes.append(plane)

    data = np.stack(planes, axis=2)
    mean = data.mean(axis=(0, 1))
    data = data - mean
    # channels flat up to rounding noise carry no signal: make them exactly 0
    span = np.abs(data).max(axis=(0, 1))
    flat = span <= 1e-9 * np.maximum(1.0, np.abs(mean))
    var = data.var(axis=(0, 1))
    data = data / np.sqrt(np.maximum(var, variance_floor))
    data[:, :, flat] = 0.0
    return FeatureStack(data=data)


def crop_side(box_w: float, box_h: float, s_search: float = 3.0) -> int:
    """Side of the search crop: s_search * max(w, h), padded up to a
    multiple of 4 so the downstream net can pool twice."""
    if box_w <= 0 or box_h <= 0:
        raise InvalidInputError(f"degenerate box {box_w}x{box_h}")
    raw = s_search * max(box_w, box_h)
    return max(16, int(np.ceil(raw / 4.0)) * 4)


def crop_search_region(img: np.ndarray, center, box_wh, s_search: float = 3.0):
    """Crop a square region centered (to the nearest pixel) at `center`.

    Out-of-frame area is filled by edge replication.  Returns
    (crop, CoordMap); map.to_frame maps crop pixel coords to frame.
    """
    arr = np.asarray(img)
    if arr.ndim not in (2, 3):
        raise InvalidInputError(f"expected 2-D or 3-D image, got shape {arr.shape}")
    side = crop_side(box_wh[0], box_wh[1], s_search)
    h, w = arr.shape[:2]
    x0 = int(np.floor(center[0] + 0.5)) - side // 2
    y0 = int(np.floor(center[1] + 0.5)) - side // 2
    xs = np.clip(np.arange(x0, x0 + side), 0, w - 1)
    ys = np.clip(np.arange(y0, y0 + side), 0, h - 1)
    crop = arr[np.ix_(ys, xs)] if arr.ndim == 2 else arr[np.ix_(ys, xs)]
    return crop, CoordMap(x0=x0, y0=y0)


def scale_sides(box_w: float, box_h: float,
                fractions=(0.25, 0.5, 1.0)) -> tuple:
    """Patch side lengths: fractions of min(w, h), rounded to even px.

    Sides are capped at the box's min dimension (floored to even) and
    deduplicated, so tiny boxes may yield fewer than len(fractions)
    distinct scales.
    """
    m = min(box_w, box_h)
    cap = max(2, 2 * int(m / 2.0))
    sides = []
    for f in fractions:
        s = min(cap, max(2, 2 * int(round(f * m / 2.0))))
        if s not in sides:
            sides.append(s)
    return tuple(sides)


def propose_patches(box, stride: int, scales, stack_w: int, stack_h: int):
    """Enumerate candidate part geometries over a stride lattice in `box`.

    box is (x, y, w, h) in feature coords.  Per grid point the scales are
    listed smallest-first; the caller accepts at most one.  Geometries
    that would poke outside the stack are dropped.
    """
    if stride < 1:
        raise InvalidInputError(f"stride must be >= 1, got {stride}")
    scales = tuple(scales)
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise InvalidInputError(f"scales must be strictly increasing, got {scales}")
    x, y, w, h = box
    bcx, bcy = x + w / 2.0, y + h / 2.0
    out = []
    gys = np.arange(int(np.ceil(y)), int(np.floor(y + h - 1e-9)) + 1, stride)
    gxs = np.arange(int(np.ceil(x)), int(np.floor(x + w - 1e-9)) + 1, stride)
    for gy in gys:
        for gx in gxs:
            for si, side in enumerate(scales):
                if side > min(w, h):
                    continue  # a scale larger than the box is not a part of it
                tlx, tly = gx - side // 2, gy - side // 2
                if tlx < 0 or tly < 0 or tlx + side > stack_w or tly + side > stack_h:
                    continue
                out.append(PatchGeometry(cx=int(gx), cy=int(gy), side=int(side),
                                         dx=gx - bcx, dy=gy - bcy, scale_index=si))
    return out


def _patch_view(stack: FeatureStack, g: PatchGeometry) -> np.ndarray:
    tlx, tly = g.top_left
    if tlx < 0 or tly < 0 or tlx + g.side > stack.width or tly + g.side > stack.height:
        raise InvalidInputError(f"patch {g} outside stack {stack.width}x{stack.height}")
    return stack.data[tly:tly + g.side, tlx:tlx + g.side, :]


def vectorize_patch(stack: FeatureStack, g: PatchGeometry) -> np.ndarray:
    """Row-major (y, x, channel) flatten of the patch, L2-normalized."""
    v = _patch_view(stack, g).ravel().astype(np.float64)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def edge_density(stack: FeatureStack, g: PatchGeometry) -> float:
    """Mean gradient magnitude over the patch (stack gradient channels)."""
    view = _patch_view(stack, g)
    gx = view[:, :, stack.grad_channels[0]]
    gy = view[:, :, stack.grad_channels[1]]
    return float(np.hypot(gx, gy).mean())
