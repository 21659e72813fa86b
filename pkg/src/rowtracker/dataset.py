"""On-disk row datasets.

Layout of a dataset directory::

    manifest.txt          key = value: format, frames, camera, calibration, gt_count
    calib.txt             camera calibration (see geom.parse_calibration)
    odometry.csv          frame_index,distance_m  (cumulative rail travel)
    detections.csv        frame_index,det_index,confidence,gt_id
    masks/NNNNNN.rle      "width height count", then one line of runs per mask
    depth/NNNNNN.depth    uint32 width, uint32 height, then uint16 millimetres

All binary fields are little-endian and images are row-major.  Depth 0
means no measurement.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import shutil
import struct
import tempfile

import numpy as np

from ._kv import format_kv, parse_kv
from .errors import CorruptManifest, DimensionMismatch, InvalidSpec, IoFailure, MissingFile
from .geom import format_calibration, parse_calibration
from .masks import rle_decode, rle_encode
from .track import FrameDetections, FrameRecord

log = logging.getLogger(__name__)

FORMAT = "rowtracker-dataset 1"
_DEPTH_HEADER = struct.Struct("<II")
MAX_DEPTH = 65.535  # metres representable in uint16 millimetres


def _frame_name(i, ext):
    return f"{i:06d}.{ext}"


def encode_depth(depth):
    depth = np.asarray(depth, dtype=float)
    if np.any(depth < 0) or np.any(depth > MAX_DEPTH) or not np.all(np.isfinite(depth)):
        raise InvalidSpec(f"depth must lie in [0, {MAX_DEPTH}] m")
    mm = np.round(depth * 1000.0).astype("<u2")
    h, w = depth.shape
    return _DEPTH_HEADER.pack(w, h) + mm.tobytes()


def decode_depth(data, frame=None):
    if len(data) < _DEPTH_HEADER.size:
        raise CorruptManifest("depth file is truncated", frame)
    w, h = _DEPTH_HEADER.unpack_from(data)
    body = data[_DEPTH_HEADER.size:]
    if len(body) != 2 * w * h:
        raise CorruptManifest(f"depth file holds {len(body)} bytes, expected {2 * w * h}", frame)
    return np.frombuffer(body, dtype="<u2").reshape(h, w) / 1000.0


def encode_masks(masks, width, height):
    lines = [f"{width} {height} {len(masks)}"]
    for m in masks:
        lines.append(" ".join(map(str, rle_encode(m))))
    return ("\n".join(lines) + "\n").encode("utf-8")


def decode_masks(text, frame=None):
    lines = text.splitlines()
    try:
        w, h, n = (int(x) for x in lines[0].split())
        if len(lines) - 1 < n:
            raise ValueError(f"{n} masks declared, {len(lines) - 1} present")
        masks = [rle_decode([int(x) for x in lines[1 + k].split()], w, h) for k in range(n)]
    except (ValueError, IndexError, DimensionMismatch) as exc:
        raise CorruptManifest(f"malformed mask file: {exc}", frame) from None
    return (w, h), masks


class RowDataset:
    """Lazily loaded dataset directory; frames are read on access."""

    def __init__(self, root, manifest, calibration, odometry, detections):
        self.root = os.fspath(root)
        self.manifest = manifest
        self.calibration = calibration
        self.odometry = odometry
        self._detections = detections  # frame -> [(confidence, gt_id)] by det_index
        self.name = manifest.get("name") or os.path.basename(os.path.normpath(self.root))

    def __len__(self):
        return len(self.odometry)

    @property
    def gt_count(self):
        v = self.manifest.get("gt_count")
        return None if v in (None, "") else int(v)

    def _path(self, kind, i):
        ext = "rle" if kind == "masks" else "depth"
        return os.path.join(self.root, kind, _frame_name(i, ext))

    def depth(self, i):
        path = self._path("depth", i)
        try:
            with open(path, "rb") as fh:
                return decode_depth(fh.read(), i)
        except FileNotFoundError:
            raise MissingFile(i, path) from None

    def masks(self, i):
        path = self._path("masks", i)
        try:
            with open(path, encoding="utf-8") as fh:
                return decode_masks(fh.read(), i)[1]
        except FileNotFoundError:
            raise MissingFile(i, path) from None

    def __getitem__(self, i):
        if not 0 <= i < len(self):
            raise IndexError(i)
        masks = self.masks(i)
        meta = self._detections.get(i, [])
        if len(meta) != len(masks):
            raise CorruptManifest(
                f"{len(masks)} masks but {len(meta)} detection rows", i
            )
        confs = [c for c, _ in meta]
        gt_ids = [g for _, g in meta]
        return FrameRecord(
            frame_index=i,
            odometry_distance=self.odometry[i],
            detections=FrameDetections(i, masks, confs),
            depth=self.depth(i),
            gt_ids=gt_ids,
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def color(self, i):
        return None


def _read_text(path, frame=None):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise MissingFile(frame, path) from None
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def load_dataset(root):
    """Open and validate a dataset directory; frame contents load lazily."""
    root = os.fspath(root)
    if not os.path.isdir(root):
        raise MissingFile(None, root)
    try:
        manifest = parse_kv(_read_text(os.path.join(root, "manifest.txt")))
    except InvalidSpec as exc:
        raise CorruptManifest(str(exc)) from None
    if manifest.get("format") != FORMAT:
        raise CorruptManifest(f"unknown dataset format {manifest.get('format')!r}")
    try:
        n = int(manifest["frames"])
    except (KeyError, ValueError):
        raise CorruptManifest("manifest needs an integer 'frames'") from None
    if n < 0:
        raise CorruptManifest("negative frame count")
    calib_path = os.path.join(root, manifest.get("calibration", "calib.txt"))
    try:
        calibration = parse_calibration(_read_text(calib_path))
    except InvalidSpec as exc:
        raise CorruptManifest(f"calibration: {exc}") from None

    odometry = _load_odometry(os.path.join(root, "odometry.csv"), n)
    detections = _load_detections(os.path.join(root, "detections.csv"), n)

    K = calibration.intrinsics
    for i in range(n):
        dpath = os.path.join(root, "depth", _frame_name(i, "depth"))
        mpath = os.path.join(root, "masks", _frame_name(i, "rle"))
        for path in (dpath, mpath):
            if not os.path.isfile(path):
                raise MissingFile(i, path)
        with open(dpath, "rb") as fh:
            head = fh.read(_DEPTH_HEADER.size)
        if len(head) < _DEPTH_HEADER.size:
            raise CorruptManifest("depth file is truncated", i)
        w, h = _DEPTH_HEADER.unpack(head)
        if (h, w) != K.shape:
            raise DimensionMismatch(f"depth {w}x{h} vs calibration {K.width}x{K.height}", i)
        with open(mpath, encoding="utf-8") as fh:
            first = fh.readline().split()
        if len(first) != 3 or not all(x.isdigit() for x in first):
            raise CorruptManifest(f"malformed mask header {first}", i)
        if (int(first[1]), int(first[0])) != K.shape:
            raise DimensionMismatch(f"mask header {first} vs calibration {K.width}x{K.height}", i)
    ds = RowDataset(root, manifest, calibration, odometry, detections)
    log.info("loaded %s: %d frames", root, n)
    return ds


def _load_odometry(path, n):
    text = _read_text(path)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["frame_index", "distance_m"]:
        raise CorruptManifest("odometry.csv needs header frame_index,distance_m")
    out = []
    for k, row in enumerate(rows[1:]):
        try:
            idx, dist = int(row[0]), float(row[1])
        except (ValueError, IndexError):
            raise CorruptManifest(f"odometry row {k + 1} is malformed", k) from None
        if idx != k:
            raise CorruptManifest(f"odometry rows must be contiguous, expected {k} got {idx}", k)
        if out and dist < out[-1]:
            raise CorruptManifest("odometry must be non-decreasing", k)
        out.append(dist)
    if len(out) != n:
        if len(out) < n:
            raise MissingFile(len(out), path)
        raise CorruptManifest(f"odometry has {len(out)} rows, manifest says {n}")
    return out


def _load_detections(path, n):
    text = _read_text(path)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["frame_index", "det_index", "confidence", "gt_id"]:
        raise CorruptManifest("detections.csv needs header frame_index,det_index,confidence,gt_id")
    out = {}
    for row in rows[1:]:
        try:
            i, j, conf, gid = int(row[0]), int(row[1]), float(row[2]), int(row[3])
        except (ValueError, IndexError):
            raise CorruptManifest(f"malformed detection row {row}") from None
        if not 0 <= i < n:
            raise CorruptManifest(f"detection row for unknown frame {i}", i)
        lst = out.setdefault(i, [])
        if j != len(lst):
            raise CorruptManifest(f"detections of frame {i} out of order", i)
        lst.append((conf, gid))
    return out


def save_dataset(frames, root, calibration, gt_count=None, name=None, camera="sim"):
    """Write ``frames`` as a dataset directory, replacing ``root`` atomically.

    Returns the ground-truth count written (taken from ``frames.gt_count``
    after the pass when not given).
    """
    root = os.path.abspath(os.fspath(root))
    parent = os.path.dirname(root)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(dir=parent, prefix=".tmp-" + os.path.basename(root))
    try:
        os.makedirs(os.path.join(tmp, "masks"))
        os.makedirs(os.path.join(tmp, "depth"))
        K = calibration.intrinsics
        odo = ["frame_index,distance_m"]
        det = ["frame_index,det_index,confidence,gt_id"]
        n = 0
        for i, frame in enumerate(frames):
            if frame.frame_index != i:
                raise CorruptManifest(f"frames must be contiguous, got {frame.frame_index} at {i}", i)
            if np.shape(frame.depth) != K.shape:
                raise DimensionMismatch(f"depth {np.shape(frame.depth)} vs camera {K.shape}", i)
            with open(os.path.join(tmp, "depth", _frame_name(i, "depth")), "wb") as fh:
                fh.write(encode_depth(frame.depth))
            masks = frame.detections.masks
            with open(os.path.join(tmp, "masks", _frame_name(i, "rle")), "wb") as fh:
                fh.write(encode_masks(masks, K.width, K.height))
            ids = frame.gt_ids or [-1] * len(masks)
            for j, (c, g) in enumerate(zip(frame.detections.confidences, ids)):
                det.append(f"{i},{j},{float(c)!r},{int(g)}")
            odo.append(f"{i},{float(frame.odometry_distance)!r}")
            n += 1
        if gt_count is None:
            gt_count = getattr(frames, "gt_count", None)
        # the directory name is not recorded so that copies compare equal
        manifest = [("format", FORMAT)] + ([("name", name)] if name else []) + [
            ("frames", n),
            ("camera", camera),
            ("calibration", "calib.txt"),
            ("gt_count", "" if gt_count is None else int(gt_count)),
        ]
        files = {
            "manifest.txt": format_kv(manifest),
            "calib.txt": format_calibration(calibration),
            "odometry.csv": "\n".join(odo) + "\n",
            "detections.csv": "\n".join(det) + "\n",
        }
        for fname, text in files.items():
            with open(os.path.join(tmp, fname), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        _replace_dir(tmp, root)
    except OSError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        raise IoFailure(f"cannot write dataset {root}: {exc}") from exc
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    log.info("wrote %s: %d frames", root, n)
    return gt_count


def _replace_dir(src, dest):
    if os.path.isdir(dest):
        old = dest + ".old-" + os.path.basename(src)
        os.replace(dest, old)
        os.replace(src, dest)
        shutil.rmtree(old, ignore_errors=True)
    else:
        os.replace(src, dest)
