"""Pinhole camera model and rigid transforms.

Conventions used throughout the package:

* camera frame: x right, y down, z forward (optical axis);
* platform frame: x along the rail, y towards the surveyed row, z up;
* ``Transform`` maps points from its source frame into its target frame,
  ``p_target = R @ p_source + t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidSpec, NonPositiveDepth
from .masks import Mask, closing

ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidSpec("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidSpec("principal point must lie inside the image")

    @classmethod
    def default(cls):
        # 1280x720 stream; fx chosen so a fruit at 0.5 m crosses the image
        # in ~40 frames at 0.2 m/s and 15 Hz (1280 * 0.5 / fx = 40 * 0.2 / 15).
        return cls(fx=1200.0, fy=1200.0, cx=640.0, cy=360.0, width=1280, height=720)

    def scaled(self, factor):
        """Same field of view at a different resolution."""
        return Intrinsics(
            self.fx * factor,
            self.fy * factor,
            self.cx * factor,
            self.cy * factor,
            int(round(self.width * factor)),
            int(round(self.height * factor)),
        )

    @property
    def matrix(self):
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    @property
    def shape(self):
        return (self.height, self.width)


@dataclass(frozen=True, eq=False)
class Transform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvalidSpec("transform has non-finite entries")
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHONORMAL_TOL or np.linalg.det(R) < 0:
            raise InvalidSpec("rotation is not a proper orthonormal matrix")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_axis_angle(cls, axis, angle, translation=(0.0, 0.0, 0.0)):
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
        )
        R = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
        return cls(R, translation)

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self):
        Rt = self.rotation.T
        return Transform(Rt, -Rt @ self.translation)

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return Transform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    __matmul__ = compose

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def allclose(self, other, atol=1e-12):
        return np.allclose(self.rotation, other.rotation, atol=atol, rtol=0) and np.allclose(
            self.translation, other.translation, atol=atol, rtol=0
        )

    def __repr__(self):
        return f"Transform(R={self.rotation.tolist()}, t={self.translation.tolist()})"


def default_extrinsics():
    """Camera-to-platform transform for a camera looking sideways at the row.

    Camera z points along platform +y, camera x along platform +x and camera y
    along platform -z.  The mount height is arbitrary (1.2 m).
    """
    R = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    return Transform(R, (0.0, 0.0, 1.2))


def project(points, K):
    """Pinhole projection of camera-frame points, shape (..., 3) -> (..., 2)."""
    p = np.asarray(points, dtype=float)
    z = p[..., 2]
    if np.any(~(z > 0)):
        raise NonPositiveDepth("cannot project a point with z <= 0")
    u = K.fx * p[..., 0] / z + K.cx
    v = K.fy * p[..., 1] / z + K.cy
    return np.stack([u, v], axis=-1)


def back_project(pixels, depth, K):
    """Lift pixels (..., 2) at z-depth ``depth`` (...) to camera-frame points."""
    px = np.asarray(pixels, dtype=float)
    d = np.asarray(depth, dtype=float)
    if np.any(~(d > 0)):
        raise NonPositiveDepth("depth must be positive")
    x = (px[..., 0] - K.cx) * d / K.fx
    y = (px[..., 1] - K.cy) * d / K.fy
    return np.stack([x, y, d * np.ones_like(x)], axis=-1)


def camera_motion(Te_ij, T_ec):
    """Camera motion between frames i and j from the platform motion.

    ``Te_ij`` maps platform-frame-i coordinates to platform-frame-j
    coordinates and ``T_ec`` maps camera coordinates to platform
    coordinates; the result maps camera-i points into camera j.
    """
    return T_ec.inverse() @ Te_ij @ T_ec


def rail_motion(distance_i, distance_j):
    """Platform motion between two cumulative rail odometry readings.

    The platform only translates along its x axis, so a point fixed in the
    world shifts by ``-(distance_j - distance_i)`` in platform coordinates.
    """
    return Transform.from_translation((distance_i - distance_j, 0.0, 0.0))


def rail_pose(distance, origin=(0.0, 0.0, 0.0)):
    """Platform-to-world pose after ``distance`` metres of rail travel."""
    return Transform.from_translation(np.asarray(origin, dtype=float) + (distance, 0.0, 0.0))


def warp_mask(mask, depths, Tc_ij, K):
    """Forward-warp mask pixels with known depths into another camera frame.

    ``depths`` holds one z-depth per set pixel in ``mask.pixels()`` order; a
    zero marks invalid depth and drops the pixel.  Returns the warped mask
    (rounded to the nearest pixel, closed with a 3x3 structuring element)
    and the z-depth of each of its pixels in the new frame.  Where several
    source pixels land on the same target pixel the nearest one wins; pixels
    added by the closing take the mean warped depth.
    """
    empty = Mask(K.width, K.height), np.zeros(0)
    u, v = mask.pixels()
    depths = np.asarray(depths, dtype=float)
    valid = depths > 0
    if not np.any(valid):
        return empty
    pts = back_project(np.stack([u[valid], v[valid]], axis=-1), depths[valid], K)
    pts = Tc_ij.apply(pts)
    pts = pts[pts[:, 2] > 0]
    if pts.shape[0] == 0:
        return empty
    uv = project(pts, K)
    ui = np.floor(uv[:, 0] + 0.5).astype(np.int64)
    vi = np.floor(uv[:, 1] + 0.5).astype(np.int64)
    z = pts[:, 2]
    keep = (ui >= 0) & (ui < K.width) & (vi >= 0) & (vi < K.height)
    if not np.any(keep):
        return empty
    ui, vi, z = ui[keep], vi[keep], z[keep]

    u0, v0 = ui.min(), vi.min()
    cw = ui.max() - u0 + 1
    flat = (vi - v0) * cw + (ui - u0)
    order = np.lexsort((z, flat))
    flat, z = flat[order], z[order]
    first = np.ones(flat.size, dtype=bool)
    first[1:] = flat[1:] != flat[:-1]
    crop_depth = np.zeros((vi.max() - v0 + 1) * cw)
    crop_depth[flat[first]] = z[first]
    crop_depth = crop_depth.reshape(-1, cw)

    raw = Mask(K.width, K.height, crop_depth > 0, top=v0, left=u0)
    warped = closing(raw)
    fill = float(z.mean())
    wu, wv = warped.pixels()
    out = np.full(wu.size, fill)
    inside = (wv >= v0) & (wv < v0 + crop_depth.shape[0]) & (wu >= u0) & (wu < u0 + crop_depth.shape[1])
    known = np.zeros(wu.size)
    known[inside] = crop_depth[wv[inside] - v0, wu[inside] - u0]
    out = np.where(known > 0, known, out)
    return warped, out


def reproject_mask(mask, depth, Tc_ij, K):
    """Re-project a detection mask from frame i into frame j.

    ``depth`` is the full frame-i depth image in metres (0 = invalid).
    """
    depth = np.asarray(depth, dtype=float)
    if mask.shape != K.shape or depth.shape != K.shape:
        raise DimensionMismatch(
            f"mask {mask.shape} and depth {depth.shape} must match camera {K.shape}"
        )
    warped, _ = warp_mask(mask, mask.sample(depth), Tc_ij, K)
    return warped


@dataclass(frozen=True)
class Calibration:
    intrinsics: Intrinsics
    extrinsics: Transform

    @classmethod
    def default(cls):
        return cls(Intrinsics.default(), default_extrinsics())


def parse_calibration(text):
    from ._kv import parse_kv

    kv = parse_kv(text)
    try:
        K = Intrinsics(
            float(kv["fx"]),
            float(kv["fy"]),
            float(kv["cx"]),
            float(kv["cy"]),
            int(kv["width"]),
            int(kv["height"]),
        )
        nums = [float(x) for x in kv["T_ec"].split()]
    except KeyError as exc:
        raise InvalidSpec(f"calibration is missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise InvalidSpec(f"calibration has a malformed value: {exc}") from None
    if len(nums) != 12:
        raise InvalidSpec(f"T_ec needs 12 numbers, got {len(nums)}")
    T_ec = Transform(np.reshape(nums[:9], (3, 3)), nums[9:])
    return Calibration(K, T_ec)


def format_calibration(calib):
    K, T = calib.intrinsics, calib.extrinsics
    nums = list(T.rotation.ravel()) + list(T.translation)
    lines = [
        "# camera: x right, y down, z forward; platform: x along rail",
        f"fx = {K.fx!r}",
        f"fy = {K.fy!r}",
        f"cx = {K.cx!r}",
        f"cy = {K.cy!r}",
        f"width = {K.width}",
        f"height = {K.height}",
        "T_ec = " + " ".join(repr(float(x)) for x in nums),
    ]
    return "\n".join(lines) + "\n"
