"""Binary instance masks stored as a tight bounding-box crop.

A full-resolution boolean image per detection is wasteful when a row holds
thousands of detections, so a :class:`Mask` keeps only the crop around its
set pixels plus the offset of that crop inside the image.  ``Mask.bits``
materialises the full row-major image when needed.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch

_SQUARE = np.ones((3, 3), dtype=bool)


class Mask:
    __slots__ = ("width", "height", "top", "left", "crop", "_centroid")

    def __init__(self, width, height, crop=None, top=0, left=0):
        self._centroid = None
        self.width = int(width)
        self.height = int(height)
        if crop is None or not np.any(crop):
            self.top = self.left = 0
            self.crop = np.zeros((0, 0), dtype=bool)
            return
        # masks are treated as immutable once built
        crop = np.array(crop, dtype=bool)
        rows = np.flatnonzero(crop.any(axis=1))
        cols = np.flatnonzero(crop.any(axis=0))
        r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
        top, left = int(top) + r0, int(left) + c0
        if top < 0 or left < 0 or top + (r1 - r0) > self.height or left + (c1 - c0) > self.width:
            raise DimensionMismatch("mask crop extends outside the image")
        self.top, self.left = top, left
        self.crop = np.ascontiguousarray(crop[r0:r1, c0:c1])
        self.crop.setflags(write=False)

    @classmethod
    def from_array(cls, bits):
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-D, got shape {bits.shape}")
        return cls(bits.shape[1], bits.shape[0], bits)

    @classmethod
    def from_pixels(cls, width, height, u, v):
        """Build a mask from integer pixel coordinates (already in bounds)."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if u.size == 0:
            return cls(width, height)
        u0, v0 = u.min(), v.min()
        crop = np.zeros((v.max() - v0 + 1, u.max() - u0 + 1), dtype=bool)
        crop[v - v0, u - u0] = True
        return cls(width, height, crop, top=v0, left=u0)

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def bits(self):
        full = np.zeros(self.shape, dtype=bool)
        h, w = self.crop.shape
        full[self.top:self.top + h, self.left:self.left + w] = self.crop
        return full

    @property
    def area(self):
        return int(np.count_nonzero(self.crop))

    @property
    def empty(self):
        return self.crop.size == 0

    @property
    def bbox(self):
        """(top, left, bottom, right) with exclusive bottom/right."""
        h, w = self.crop.shape
        return self.top, self.left, self.top + h, self.left + w

    def pixels(self):
        """Return ``(u, v)`` integer coordinates of every set pixel."""
        r, c = np.nonzero(self.crop)
        return c + self.left, r + self.top

    @property
    def centroid(self):
        """Mean ``(u, v)`` of the set pixels, or ``None`` for an empty mask."""
        if self.empty:
            return None
        if self._centroid is None:
            r, c = np.nonzero(self.crop)
            self._centroid = (float(c.mean()) + self.left, float(r.mean()) + self.top)
        return self._centroid

    def sample(self, image):
        """Values of a full-size image under the set pixels (row-major order)."""
        image = np.asarray(image)
        if image.shape[:2] != self.shape:
            raise DimensionMismatch(f"image {image.shape[:2]} vs mask {self.shape}")
        t, l, b, r = self.bbox
        return image[t:b, l:r][self.crop]

    def morph(self, iterations):
        """Dilate (positive) or erode (negative) by ``|iterations|`` 3x3 steps."""
        if iterations == 0 or self.empty:
            return self
        n = abs(int(iterations))
        pad = n + 1
        padded = np.pad(self.crop, pad)
        if iterations > 0:
            out = ndimage.binary_dilation(padded, _SQUARE, iterations=n)
        else:
            out = ndimage.binary_erosion(padded, _SQUARE, iterations=n)
        return _clip(out, self.width, self.height, self.top - pad, self.left - pad)

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.bbox == other.bbox
            and np.array_equal(self.crop, other.crop)
        )

    def __repr__(self):
        return f"Mask({self.width}x{self.height}, area={self.area}, bbox={self.bbox})"


def _clip(crop, width, height, top, left):
    """Place ``crop`` at (top, left), dropping whatever falls outside the image."""
    h, w = crop.shape
    r0, c0 = max(0, -top), max(0, -left)
    r1, c1 = min(h, height - top), min(w, width - left)
    if r0 >= r1 or c0 >= c1:
        return Mask(width, height)
    return Mask(width, height, crop[r0:r1, c0:c1], top=top + r0, left=left + c0)


def closing(mask):
    """3x3 binary closing, one pass, without eroding at the image border."""
    if mask.empty:
        return mask
    pad = 2
    padded = np.pad(mask.crop, pad)
    out = ndimage.binary_closing(padded, _SQUARE, iterations=1)
    return _clip(out, mask.width, mask.height, mask.top - pad, mask.left - pad)


def disk(width, height, cu, cv, radius):
    """Rasterise a filled disk (pixel centres within ``radius``)."""
    u0, u1 = int(np.floor(cu - radius)), int(np.ceil(cu + radius)) + 1
    v0, v1 = int(np.floor(cv - radius)), int(np.ceil(cv + radius)) + 1
    uu, vv = np.meshgrid(np.arange(u0, u1), np.arange(v0, v1))
    crop = (uu - cu) ** 2 + (vv - cv) ** 2 <= radius * radius
    return _clip(crop, width, height, v0, u0)


def mask_iou(a, b):
    """Intersection over union; 0 when both masks are empty."""
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    area_a, area_b = a.area, b.area
    if area_a + area_b == 0:
        return 0.0
    at, al, ab, ar = a.bbox
    bt, bl, bb, br = b.bbox
    t, l, bo, r = max(at, bt), max(al, bl), min(ab, bb), min(ar, br)
    inter = 0
    if t < bo and l < r:
        ca = a.crop[t - at:bo - at, l - al:r - al]
        cb = b.crop[t - bt:bo - bt, l - bl:r - bl]
        inter = int(np.count_nonzero(ca & cb))
    return inter / (area_a + area_b - inter)


# -- run-length encoding ----------------------------------------------------
# Runs alternate background/foreground over the row-major image, starting
# with a (possibly zero-length) background run.


def rle_encode(mask):
    if mask.empty:
        return [mask.width * mask.height]
    u, v = mask.pixels()
    flat = np.sort(v.astype(np.int64) * mask.width + u)
    breaks = np.flatnonzero(np.diff(flat) != 1)
    starts = np.concatenate([[flat[0]], flat[breaks + 1]])
    ends = np.concatenate([flat[breaks] + 1, [flat[-1] + 1]])
    bounds = np.empty(2 * starts.size + 2, dtype=np.int64)
    bounds[0] = 0
    bounds[1:-1:2] = starts
    bounds[2:-1:2] = ends
    bounds[-1] = mask.width * mask.height
    runs = np.diff(bounds)
    if runs[-1] == 0:
        runs = runs[:-1]
    return runs.tolist()


def rle_decode(runs, width, height):
    runs = np.asarray(runs, dtype=np.int64)
    if runs.size and runs.min() < 0:
        raise ValueError("negative run length")
    if int(runs.sum()) != width * height:
        raise DimensionMismatch(
            f"runs cover {int(runs.sum())} pixels, image has {width * height}"
        )
    bounds = np.concatenate([[0], np.cumsum(runs)])
    starts, ends = bounds[1::2], bounds[2::2]
    starts = starts[: ends.size]
    if starts.size == 0:
        return Mask(width, height)
    lengths = ends - starts
    flat = np.repeat(starts - np.cumsum(np.concatenate([[0], lengths[:-1]])), lengths)
    flat += np.arange(flat.size)
    return Mask.from_pixels(width, height, flat % width, flat // width)
