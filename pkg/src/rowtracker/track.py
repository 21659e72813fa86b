"""Tracking-via-segmentation fruit counter.

Three variants share one pipeline:

``bl``
    IoU association against each tracklet's last mask as-is.
``rp``
    Each tracklet's mask is first re-projected into the current frame using
    the wheel-odometry camera motion and the mask's per-pixel depth.
``df``
    ``rp`` plus rejection of detections whose depths mostly fall outside the
    surveyed row.

Zones assume the platform advances along +x with the default camera mount,
so the scene scrolls right to left: fruits enter on the right (start zone)
and leave on the left (stop zone).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, EmptyMask, InvalidSpec, OutOfOrderFrame
from .geom import Calibration, camera_motion, default_extrinsics, rail_motion, warp_mask
from .masks import Mask, mask_iou

log = logging.getLogger(__name__)

VARIANTS = ("bl", "rp", "df")


@dataclass(frozen=True)
class FilterConfig:
    d_crop_min: float = 0.2
    d_crop_max: float = 1.4
    tau_dpt: float = 0.5

    def __post_init__(self):
        if not (0 < self.d_crop_min < self.d_crop_max):
            raise InvalidSpec("need 0 < d_crop_min < d_crop_max")
        if not (0 <= self.tau_dpt <= 1):
            raise InvalidSpec("tau_dpt must lie in [0, 1]")


@dataclass(frozen=True)
class TrackerConfig:
    variant: str = "df"
    iou_threshold: float = 0.3
    max_misses: int = 10
    min_hits: int = 5
    start_zone: float = 0.1
    stop_zone: float = 0.1
    confidence_floor: float = 0.0
    depth_filter: FilterConfig = field(default_factory=FilterConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidSpec(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not (0 <= self.iou_threshold <= 1):
            raise InvalidSpec("iou_threshold must lie in [0, 1]")
        if self.max_misses < 0 or self.min_hits < 1:
            raise InvalidSpec("need max_misses >= 0 and min_hits >= 1")
        if not (0 <= self.start_zone < 0.5 and 0 <= self.stop_zone < 0.5):
            raise InvalidSpec("zones must lie in [0, 0.5)")

    @property
    def reprojects(self):
        return self.variant in ("rp", "df")


@dataclass(frozen=True)
class FrameDetections:
    frame_index: int
    masks: list
    confidences: list

    def __post_init__(self):
        if len(self.masks) != len(self.confidences):
            raise InvalidSpec("masks and confidences must have equal length")

    def __len__(self):
        return len(self.masks)


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    odometry_distance: float
    detections: FrameDetections
    depth: np.ndarray
    gt_ids: Optional[list] = None


@dataclass(frozen=True)
class Tracklet:
    id: int
    last_mask: Mask
    last_depths: np.ndarray  # z-depth per set pixel of last_mask, row-major
    last_frame: int
    miss_count: int = 0
    hit_count: int = 1


@dataclass(frozen=True)
class TrackerState:
    active: tuple = ()
    retired: tuple = ()
    next_id: int = 0
    frame_cursor: int = -1
    last_odometry: Optional[float] = None
    # bookkeeping from the most recent step, as indices into that frame's
    # detections: {tracklet id: detection} and ((tracklet id, detection), ...)
    matches: dict = field(default_factory=dict)
    spawned: tuple = ()

    @property
    def tracklets(self):
        return self.active + self.retired


def parse_tracker_config(text, base=None):
    """Read a ``key = value`` tracker config; unspecified keys keep ``base``."""
    from ._kv import parse_kv

    base = base or TrackerConfig()
    kv = parse_kv(text)
    casts = {
        "variant": str,
        "iou_threshold": float,
        "max_misses": int,
        "min_hits": int,
        "start_zone": float,
        "stop_zone": float,
        "confidence_floor": float,
    }
    filt = {"d_crop_min": float, "d_crop_max": float, "tau_dpt": float}
    unknown = set(kv) - set(casts) - set(filt)
    if unknown:
        raise InvalidSpec(f"unknown tracker keys: {sorted(unknown)}")
    try:
        top = {k: casts[k](v) for k, v in kv.items() if k in casts}
        low = {k: filt[k](v) for k, v in kv.items() if k in filt}
    except ValueError as exc:
        raise InvalidSpec(f"tracker config: {exc}") from None
    return replace(base, depth_filter=replace(base.depth_filter, **low), **top)


def depth_retain(mask, depth, cfg):
    """True when more than ``tau_dpt`` of the mask's pixels lie in the crop range.

    Pixels with invalid depth (0) count in the denominator only.
    """
    if mask.empty:
        raise EmptyMask("cannot depth-filter an empty mask")
    depth = np.asarray(depth)
    if depth.shape != mask.shape:
        raise DimensionMismatch(f"depth {depth.shape} vs mask {mask.shape}")
    d = mask.sample(depth)
    inside = np.count_nonzero((d >= cfg.d_crop_min) & (d <= cfg.d_crop_max))
    return inside / d.size > cfg.tau_dpt


def associate(tracklet_masks, detections, iou_threshold, iou=mask_iou):
    """Greedy IoU matching of tracklets to detections.

    ``tracklet_masks`` must be ordered by tracklet id.  All pairs are ranked
    by IoU (descending), then tracklet position, then detection index; a
    pair is accepted when its IoU is positive, reaches ``iou_threshold`` and
    neither side is already taken.  Returns ``{tracklet_pos: detection_idx}``.
    """
    det_masks = detections.masks if isinstance(detections, FrameDetections) else detections
    pairs = []
    for i, tm in enumerate(tracklet_masks):
        for j, dm in enumerate(det_masks):
            score = iou(tm, dm)
            if score > 0 and score >= iou_threshold:
                pairs.append((-score, i, j))
    pairs.sort()
    out, used = {}, set()
    for _, i, j in pairs:
        if i in out or j in used:
            continue
        out[i] = j
        used.add(j)
    return out


class FrameCache:
    """Memo shared by several tracker states stepping through the same frame.

    Sweeps run many (variant, threshold) cells over identical input; cells
    whose tracklets hold the very same mask objects reuse warps, IoUs and
    depth samples instead of recomputing them.  Entries keep their key
    objects alive, so ``id()`` keys stay unambiguous for the cache lifetime.
    """

    def __init__(self):
        self._memo = {}

    def get(self, kind, objs, fn):
        key = (kind,) + tuple(id(o) for o in objs)
        hit = self._memo.get(key)
        if hit is None:
            hit = self._memo[key] = (objs, fn())
        return hit[1]


class _NoCache:
    def get(self, kind, objs, fn):
        return fn()


def _in_stop_zone(u, width, cfg):
    return u < cfg.stop_zone * width


def _in_start_zone(u, width, cfg):
    return u >= (1.0 - cfg.start_zone) * width


def step(state, frame, cfg, K, T_ec=None, cache=None):
    """Advance the tracker by one frame and return the new state.

    ``cache`` is an optional :class:`FrameCache` shared between states that
    process this same frame; it never changes the result.
    """
    expected = state.frame_cursor + 1
    if frame.frame_index != expected:
        raise OutOfOrderFrame(f"expected frame {expected}, got {frame.frame_index}")
    if T_ec is None:
        T_ec = default_extrinsics()
    cache = cache or _NoCache()
    depth = np.asarray(frame.depth)
    if depth.shape != K.shape:
        raise DimensionMismatch(f"depth {depth.shape} vs camera {K.shape}", frame.frame_index)
    width = K.width

    dets, det_index = [], []
    for k, (mask, conf) in enumerate(zip(frame.detections.masks, frame.detections.confidences)):
        if mask.empty or conf < cfg.confidence_floor:
            continue
        if cfg.variant == "df" and not cache.get(
            ("df", cfg.depth_filter), (mask,), lambda: depth_retain(mask, depth, cfg.depth_filter)
        ):
            continue
        dets.append(mask)
        det_index.append(k)

    retired = list(state.retired)
    active = []
    predicted = []
    motion = None
    if cfg.reprojects and state.last_odometry is not None:
        motion = cache.get(
            ("motion", state.last_odometry, frame.odometry_distance),
            (T_ec,),
            lambda: camera_motion(rail_motion(state.last_odometry, frame.odometry_distance), T_ec),
        )
    for tr in state.active:
        if motion is not None:
            mask, depths = cache.get(
                ("warp", state.last_odometry, frame.odometry_distance),
                (tr.last_mask, tr.last_depths),
                lambda: warp_mask(tr.last_mask, tr.last_depths, motion, K),
            )
            if mask.empty:
                # re-projected out of view
                retired.append(tr)
                continue
        else:
            mask, depths = tr.last_mask, tr.last_depths
        active.append(tr)
        predicted.append((mask, depths))

    def iou(a, b):
        return cache.get("iou", (a, b), lambda: mask_iou(a, b))

    matches = associate([m for m, _ in predicted], dets, cfg.iou_threshold, iou)

    def sample(det):
        return cache.get("sample", (det,), lambda: det.sample(depth))

    survivors = []
    for pos, tr in enumerate(active):
        if pos in matches:
            det = dets[matches[pos]]
            tr = replace(
                tr,
                last_mask=det,
                last_depths=sample(det),
                last_frame=frame.frame_index,
                miss_count=0,
                hit_count=tr.hit_count + 1,
            )
        else:
            mask, depths = predicted[pos]
            tr = replace(tr, last_mask=mask, last_depths=depths, miss_count=tr.miss_count + 1)
            if tr.miss_count > cfg.max_misses:
                retired.append(tr)
                continue
        if _in_stop_zone(tr.last_mask.centroid[0], width, cfg):
            retired.append(tr)
            continue
        survivors.append(tr)

    next_id = state.next_id
    spawned = []
    taken = set(matches.values())
    for j, det in enumerate(dets):
        if j in taken:
            continue
        u = det.centroid[0]
        if _in_stop_zone(u, width, cfg) or _in_start_zone(u, width, cfg):
            continue
        survivors.append(
            Tracklet(
                id=next_id,
                last_mask=det,
                last_depths=sample(det),
                last_frame=frame.frame_index,
            )
        )
        spawned.append((next_id, det_index[j]))
        next_id += 1

    return TrackerState(
        active=tuple(survivors),
        retired=tuple(retired),
        next_id=next_id,
        frame_cursor=frame.frame_index,
        last_odometry=frame.odometry_distance,
        matches={active[p].id: det_index[j] for p, j in matches.items()},
        spawned=tuple(spawned),
    )


def finalize(state, cfg):
    """Number of tracklets with at least ``min_hits`` associated detections."""
    return sum(1 for tr in state.tracklets if tr.hit_count >= cfg.min_hits)


def run_tracker(frames, cfg, calib=None):
    """Track a whole row and return the final state."""
    calib = calib or Calibration.default()
    state = TrackerState()
    for frame in frames:
        state = step(state, frame, cfg, calib.intrinsics, calib.extrinsics)
    log.debug("variant=%s iou=%.2f tracklets=%d", cfg.variant, cfg.iou_threshold, state.next_id)
    return state


def count_row(frames, cfg, calib=None):
    return finalize(run_tracker(frames, cfg, calib), cfg)
