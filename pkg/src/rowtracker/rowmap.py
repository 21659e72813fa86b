"""Offline row map: per-frame RGB-D clouds concatenated in the world frame."""

from __future__ import annotations

import io
import logging
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidSpec, IoFailure, MissingCalibration
from .geom import back_project, rail_pose

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MapConfig:
    skip: int = 60
    d_min: float = 0.2
    d_max: float = 1.4

    def __post_init__(self):
        if self.skip < 1:
            raise InvalidSpec("skip must be at least 1")
        if not (0 < self.d_min < self.d_max):
            raise InvalidSpec("need 0 < d_min < d_max")


@dataclass
class PointCloud:
    """N points with 8-bit colours.

    ``source_frame`` and ``source_depth`` record the frame index and the
    camera-frame depth each point came from.
    """

    points: np.ndarray
    colors: np.ndarray
    source_frame: np.ndarray
    source_depth: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        n = len(self.points)
        self.source_frame = np.broadcast_to(np.asarray(self.source_frame, dtype=np.int64), (n,)).copy()
        self.source_depth = np.broadcast_to(np.asarray(self.source_depth, dtype=float), (n,)).copy()
        if len(self.colors) != n:
            raise DimensionMismatch(f"{n} points but {len(self.colors)} colours")

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0))

    def __len__(self):
        return len(self.points)

    def transformed(self, T):
        return PointCloud(T.apply(self.points), self.colors, self.source_frame, self.source_depth)

    @classmethod
    def concatenate(cls, clouds):
        clouds = list(clouds)
        if not clouds:
            return cls.empty()
        return cls(
            np.concatenate([c.points for c in clouds]),
            np.concatenate([c.colors for c in clouds]),
            np.concatenate([c.source_frame for c in clouds]),
            np.concatenate([c.source_depth for c in clouds]),
        )


def depth_gray(depth, cfg):
    """Stand-in colour for depth-only data: near is bright, far is dark."""
    span = cfg.d_max - cfg.d_min
    g = np.clip((cfg.d_max - depth) / span, 0.0, 1.0) * 255.0
    g = np.round(g).astype(np.uint8)
    return np.stack([g, g, g], axis=-1)


def frame_cloud(depth, color, K, cfg=None, frame_index=0):
    """Camera-frame cloud of every pixel whose depth lies in ``[d_min, d_max]``."""
    cfg = cfg or MapConfig()
    depth = np.asarray(depth, dtype=float)
    if depth.shape != K.shape:
        raise DimensionMismatch(f"depth {depth.shape} vs camera {K.shape}", frame_index)
    if color is not None:
        color = np.asarray(color)
        if color.shape[:2] != K.shape:
            raise DimensionMismatch(f"colour {color.shape[:2]} vs camera {K.shape}", frame_index)
    keep = (depth >= cfg.d_min) & (depth <= cfg.d_max)
    v, u = np.nonzero(keep)
    d = depth[v, u]
    if d.size == 0:
        return PointCloud.empty()
    pts = back_project(np.stack([u, v], axis=-1), d, K)
    if color is None:
        rgb = depth_gray(d, cfg)
    elif color.ndim == 2:
        rgb = np.repeat(color[v, u][:, None], 3, axis=1)
    else:
        rgb = color[v, u, :3]
    return PointCloud(pts, rgb, frame_index, d)


def build_map(dataset, cfg=None, calib=None, origin=(0.0, 0.0, 0.0)):
    """Concatenate every ``skip``-th frame's cloud in the world frame.

    Frame ``i`` is placed with the platform pose after its cumulative rail
    odometry, composed with the camera extrinsics; ``origin`` offsets every
    pose.  Points are not fused or deduplicated.
    """
    cfg = cfg or MapConfig()
    calib = calib or getattr(dataset, "calibration", None)
    if calib is None:
        raise MissingCalibration("row map needs camera intrinsics and extrinsics")
    K, T_ec = calib.intrinsics, calib.extrinsics
    clouds = []
    for i in range(0, len(dataset), cfg.skip):
        frame = dataset[i]
        color = dataset.color(i) if hasattr(dataset, "color") else None
        cloud = frame_cloud(frame.depth, color, K, cfg, frame_index=frame.frame_index)
        pose = rail_pose(frame.odometry_distance, origin) @ T_ec
        clouds.append(cloud.transformed(pose))
        log.debug("frame %d: %d points", frame.frame_index, len(cloud))
    return PointCloud.concatenate(clouds)


# -- PLY ----------------------------------------------------------------------


def ply_bytes(cloud, binary=False):
    n = len(cloud)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        f"ply\nformat {fmt} 1.0\nelement vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    if binary:
        rec = np.empty(n, dtype=[("p", "<f4", 3), ("c", "u1", 3)])
        rec["p"] = cloud.points
        rec["c"] = cloud.colors
        return header.encode("ascii") + rec.tobytes()
    out = io.StringIO()
    out.write(header)
    for (x, y, z), (r, g, b) in zip(cloud.points.tolist(), cloud.colors.tolist()):
        out.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")
    return out.getvalue().encode("ascii")


def write_ply(cloud, destination, binary=False):
    """Write ``cloud`` as PLY to a path (atomically) or a binary file object."""
    data = ply_bytes(cloud, binary)
    try:
        if hasattr(destination, "write"):
            destination.write(data)
            return
        atomic_write(destination, data)
    except OSError as exc:
        raise IoFailure(f"cannot write {destination}: {exc}") from exc


def atomic_write(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_ply(source):
    """Parse a PLY written by :func:`write_ply` (ASCII or binary)."""
    try:
        if hasattr(source, "read"):
            data = source.read()
        else:
            with open(source, "rb") as fh:
                data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {source}: {exc}") from exc
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise IoFailure("not a PLY file")
    header = data[:end].decode("ascii").splitlines()
    body = data[end + len(b"end_header\n"):]
    n = next(int(line.split()[2]) for line in header if line.startswith("element vertex"))
    if any("binary_little_endian" in line for line in header):
        rec = np.frombuffer(body, dtype=[("p", "<f4", 3), ("c", "u1", 3)], count=n)
        pts, cols = rec["p"].astype(float), rec["c"]
    else:
        rows = np.loadtxt(io.BytesIO(body), ndmin=2).reshape(-1, 6) if n else np.zeros((0, 6))
        pts, cols = rows[:, :3], rows[:, 3:].astype(np.uint8)
    return PointCloud(pts, cols, -1, np.nan)
