"""Synthetic glasshouse row with exact ground truth.

Fruits are spheres and leaves are axis-aligned boxes, both in world
coordinates (x along the rail, y away from the rail line, z up).  The
camera rides the rail at ``speed`` and fires at ``frame_rate``; each frame
is ray-cast with a z-buffer, producing one instance mask per visible fruit
and a millimetre-quantised depth image.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidSpec
from .geom import Calibration, Intrinsics, default_extrinsics, rail_pose
from .masks import Mask, disk
from .track import FrameDetections, FrameRecord

FOREGROUND, BACKGROUND = "fg", "bg"
ROW_TAGS = {"fg": FOREGROUND, "foreground": FOREGROUND, "bg": BACKGROUND, "background": BACKGROUND}

ROW_DEPTH = (0.2, 1.4)
MIN_VISIBLE = 0.1  # fraction of the unoccluded silhouette needed for a detection


@dataclass(frozen=True)
class Fruit:
    center: tuple
    radius: float
    row: str = FOREGROUND


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple


@dataclass(frozen=True)
class SceneSpec:
    fruits: tuple = ()
    rail_length: float = 3.0
    speed: float = 0.2
    frame_rate: float = 15.0
    occluders: tuple = ()

    def validate(self):
        if not (self.rail_length >= 0 and self.speed > 0 and self.frame_rate > 0):
            raise InvalidSpec("need rail_length >= 0, speed > 0 and frame_rate > 0")
        for k, f in enumerate(self.fruits):
            if not f.radius > 0:
                raise InvalidSpec(f"fruit {k}: radius must be positive")
            if f.row not in (FOREGROUND, BACKGROUND):
                raise InvalidSpec(f"fruit {k}: unknown row tag {f.row!r}")
            y = f.center[1]
            if f.row == FOREGROUND and not (ROW_DEPTH[0] <= y <= ROW_DEPTH[1]):
                raise InvalidSpec(f"fruit {k}: foreground depth {y} outside {ROW_DEPTH}")
            if f.row == BACKGROUND and not y > ROW_DEPTH[1]:
                raise InvalidSpec(f"fruit {k}: background depth {y} must exceed {ROW_DEPTH[1]}")
        for k, b in enumerate(self.occluders):
            if not np.all(np.asarray(b.lo) < np.asarray(b.hi)):
                raise InvalidSpec(f"occluder {k}: lo must be below hi on every axis")

    @property
    def step(self):
        return self.speed / self.frame_rate

    @property
    def n_frames(self):
        return int(np.floor(self.rail_length / self.step + 1e-9)) + 1


@dataclass(frozen=True)
class NoiseSpec:
    odometry_sigma: float = 0.001
    dropout_prob: float = 0.1
    false_positive_rate: float = 0.2
    mask_jitter: int = 2
    seed: int = 0
    # detector recall scales down linearly for masks smaller than this
    # fraction of the image area (0 disables)
    small_object_area: float = 0.008

    def __post_init__(self):
        if (
            self.odometry_sigma < 0
            or self.false_positive_rate < 0
            or self.mask_jitter < 0
            or self.small_object_area < 0
        ):
            raise InvalidSpec("noise magnitudes must be non-negative")
        if not (0 <= self.dropout_prob <= 1):
            raise InvalidSpec("dropout_prob must lie in [0, 1]")

    @classmethod
    def none(cls, seed=0):
        return cls(0.0, 0.0, 0.0, 0, seed, 0.0)

    @property
    def is_zero(self):
        return (
            self.odometry_sigma == 0
            and self.dropout_prob == 0
            and self.false_positive_rate == 0
            and self.mask_jitter == 0
            and self.small_object_area == 0
        )


@dataclass(frozen=True)
class Scene:
    spec: SceneSpec
    seed: int
    centers: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)
    foreground: np.ndarray = field(repr=False)
    box_lo: np.ndarray = field(repr=False)
    box_hi: np.ndarray = field(repr=False)

    def positions(self):
        """Noise-free rail position of every frame."""
        return np.arange(self.spec.n_frames) * self.spec.step


def generate_scene(spec, seed=0):
    """Validate ``spec`` and freeze it into arrays for rendering."""
    spec.validate()
    centers = np.array([f.center for f in spec.fruits], dtype=float).reshape(-1, 3)
    radii = np.array([f.radius for f in spec.fruits], dtype=float)
    fg = np.array([f.row == FOREGROUND for f in spec.fruits], dtype=bool)
    lo = np.array([b.lo for b in spec.occluders], dtype=float).reshape(-1, 3)
    hi = np.array([b.hi for b in spec.occluders], dtype=float).reshape(-1, 3)
    return Scene(spec, int(seed), centers, radii, fg, lo, hi)


def random_scene_spec(
    seed,
    n_foreground=20,
    n_background=10,
    rail_length=3.0,
    radius_range=(0.035, 0.05),
    foreground_depth=(0.4, 0.75),
    background_depth=(1.8, 2.6),
    n_occluders=0,
    canopy_depth=(0.95, 1.35),
    leaf_size=(0.05, 0.12),
    height_coverage=2.0,
    separated=False,
    calib=None,
):
    """Random row for benchmarking.

    Fruit heights spread over ``height_coverage`` times the camera's vertical
    half-view at each fruit's depth; above 1 some fruits fall outside this
    camera's view and do not count towards the row's ground truth.

    With ``separated`` the placement is re-drawn until no two fruits ever
    overlap in the image anywhere along the rail, so clean renders contain no
    fruit-on-fruit occlusion.  Leaves are thin boxes hanging between the
    camera and the foreground row.
    """
    rng = np.random.default_rng(seed)
    calib = calib or Calibration.default()
    K, T_ec = calib.intrinsics, calib.extrinsics
    cam_y, cam_z = T_ec.translation[1], T_ec.translation[2]
    half_v = height_coverage * (K.height / 2) / K.fy
    placed = []

    def clashes(f):
        for g in placed:
            if _image_overlap(f, g, rail_length, cam_y, cam_z, K):
                return True
        return False

    def place(n, depth_range, tag):
        for _ in range(n):
            for _attempt in range(1000):
                y = rng.uniform(*depth_range)
                r = rng.uniform(*radius_range)
                x = rng.uniform(0.0, rail_length)
                dz = rng.uniform(-1, 1) * (y - cam_y) * half_v
                f = Fruit((x, y, cam_z + dz), r, tag)
                if not (separated and clashes(f)):
                    break
            else:
                raise InvalidSpec("could not place fruits without overlap; lower the count")
            placed.append(f)

    place(n_foreground, foreground_depth, FOREGROUND)
    place(n_background, background_depth, BACKGROUND)
    boxes = []
    near = max(f.center[1] for f in placed if f.row == FOREGROUND) if n_foreground else 0.9
    band = 0.4 * (canopy_depth[1] - cam_y) * (K.height / K.fy)  # half-height of the view
    for _ in range(n_occluders):
        # canopy of the surveyed row, behind its fruit and in front of the next row
        x = rng.uniform(-0.5, rail_length + 0.5)
        y = rng.uniform(max(canopy_depth[0], near + 0.05), canopy_depth[1])
        z = cam_z + rng.uniform(-band, band)
        w, h = rng.uniform(*leaf_size), rng.uniform(*leaf_size)
        boxes.append(Box((x - w / 2, y, z - h / 2), (x + w / 2, y + 0.005, z + h / 2)))
    return SceneSpec(tuple(placed), rail_length, occluders=tuple(boxes))


def _image_overlap(f, g, rail_length, cam_y, cam_z, K, margin=3.0):
    """Whether two fruits' silhouettes can touch in any frame along the rail.

    Under pure rail motion a fruit's image row is fixed, so only the column
    gap varies (linearly) with the rail position.
    """
    (x1, y1, z1), (x2, y2, z2) = f.center, g.center
    d1, d2 = y1 - cam_y, y2 - cam_y
    r1, r2 = K.fx * f.radius / d1 * 1.05, K.fx * g.radius / d2 * 1.05
    v1, v2 = K.fy * (cam_z - z1) / d1, K.fy * (cam_z - z2) / d2
    if abs(v1 - v2) > r1 + r2 + margin:
        return False
    s = np.linspace(-1.0, rail_length + 1.0, 400)
    u1 = K.fx * (x1 - s) / d1 + K.cx
    u2 = K.fx * (x2 - s) / d2 + K.cx
    in_view = (np.minimum(u1, u2) < K.width + r1 + r2) & (np.maximum(u1, u2) > -r1 - r2)
    return bool(np.any(in_view & (np.abs(u1 - u2) < r1 + r2 + margin)))


# -- rendering ----------------------------------------------------------------


def _silhouette_range(c_a, c_z, r):
    """Extreme values of a/z over a sphere, for one image axis."""
    s = np.sqrt(max(c_a * c_a + c_z * c_z - r * r, 0.0))
    den = c_z * c_z - r * r
    lo = (c_a * c_z - r * s) / den
    hi = (c_a * c_z + r * s) / den
    return lo, hi


def _pixel_window(lo, hi, f, c, n):
    a = int(np.floor(f * lo + c)) - 1
    b = int(np.ceil(f * hi + c)) + 2
    return max(a, 0), min(b, n)


def render_frame(scene, rail_position, K, T_ec=None, frame_index=0):
    """Ray-cast one frame at ``rail_position`` metres along the rail."""
    if T_ec is None:
        T_ec = Calibration.default().extrinsics
    cam = rail_pose(rail_position) @ T_ec
    world_to_cam = cam.inverse()
    H, W = K.height, K.width
    zbuf = np.full((H, W), np.inf)
    label = np.full((H, W), -1, dtype=np.int32)
    xn = (np.arange(W) - K.cx) / K.fx
    yn = (np.arange(H) - K.cy) / K.fy

    # occluders: slab test in camera coordinates, ray = t * (xn, yn, 1)
    R = world_to_cam.rotation
    for lo_w, hi_w in zip(scene.box_lo, scene.box_hi):
        corners = np.array(
            [[a, b, c] for a in (lo_w[0], hi_w[0]) for b in (lo_w[1], hi_w[1]) for c in (lo_w[2], hi_w[2])]
        )
        cc = world_to_cam.apply(corners)
        if np.all(cc[:, 2] <= 0):
            continue
        if np.all(cc[:, 2] > 0):
            uv_x = cc[:, 0] / cc[:, 2]
            uv_y = cc[:, 1] / cc[:, 2]
            u0, u1 = _pixel_window(uv_x.min(), uv_x.max(), K.fx, K.cx, W)
            v0, v1 = _pixel_window(uv_y.min(), uv_y.max(), K.fy, K.cy, H)
        else:
            u0, u1, v0, v1 = 0, W, 0, H
        if u0 >= u1 or v0 >= v1:
            continue
        # box is axis-aligned in the world; test slabs along world axes
        dx, dy = np.meshgrid(xn[u0:u1], yn[v0:v1])
        dirs_w = np.stack([dx, dy, np.ones_like(dx)], axis=-1) @ R  # R.T @ d per pixel
        origin = cam.translation
        t_near = np.full(dx.shape, -np.inf)
        t_far = np.full(dx.shape, np.inf)
        for ax in range(3):
            d = dirs_w[..., ax]
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo_w[ax] - origin[ax]) / d
                t2 = (hi_w[ax] - origin[ax]) / d
            parallel = d == 0
            inside = (origin[ax] >= lo_w[ax]) & (origin[ax] <= hi_w[ax])
            t1 = np.where(parallel, -np.inf if inside else np.inf, t1)
            t2 = np.where(parallel, np.inf if inside else -np.inf, t2)
            t_near = np.maximum(t_near, np.minimum(t1, t2))
            t_far = np.minimum(t_far, np.maximum(t1, t2))
        hit = (t_near <= t_far) & (t_near > 0)
        z = np.where(hit, t_near, np.inf)
        sub = zbuf[v0:v1, u0:u1]
        closer = z < sub
        sub[closer] = z[closer]
        label[v0:v1, u0:u1][closer] = -2

    centers = world_to_cam.apply(scene.centers) if len(scene.radii) else np.zeros((0, 3))
    windows = {}
    silhouette = {}
    for k, (c, r) in enumerate(zip(centers, scene.radii)):
        if c[2] - r <= 1e-3:
            continue
        ulo, uhi = _silhouette_range(c[0], c[2], r)
        vlo, vhi = _silhouette_range(c[1], c[2], r)
        u0, u1 = _pixel_window(ulo, uhi, K.fx, K.cx, W)
        v0, v1 = _pixel_window(vlo, vhi, K.fy, K.cy, H)
        if u0 >= u1 or v0 >= v1:
            continue
        dx, dy = np.meshgrid(xn[u0:u1], yn[v0:v1])
        a = dx * dx + dy * dy + 1.0
        b = dx * c[0] + dy * c[1] + c[2]
        disc = b * b - a * (c @ c - r * r)
        hit = disc >= 0
        if not np.any(hit):
            continue
        z = np.where(hit, (b - np.sqrt(np.where(hit, disc, 0.0))) / a, np.inf)
        sub = zbuf[v0:v1, u0:u1]
        closer = z < sub
        sub[closer] = z[closer]
        label[v0:v1, u0:u1][closer] = k
        windows[k] = (v0, v1, u0, u1)
        silhouette[k] = int(np.count_nonzero(hit))

    depth = np.where(np.isfinite(zbuf), np.round(zbuf * 1000.0) / 1000.0, 0.0)

    masks, gt_ids = [], []
    for k, (v0, v1, u0, u1) in windows.items():
        crop = label[v0:v1, u0:u1] == k
        n = int(np.count_nonzero(crop))
        if n == 0 or n < MIN_VISIBLE * silhouette[k]:
            continue
        masks.append(Mask(W, H, crop, top=v0, left=u0))
        gt_ids.append(k)

    return FrameRecord(
        frame_index=frame_index,
        odometry_distance=float(rail_position),
        detections=FrameDetections(frame_index, masks, [1.0] * len(masks)),
        depth=depth,
        gt_ids=gt_ids,
    )


# -- scene files ----------------------------------------------------------------
# ``key = value`` header lines (rail_length, speed, frame_rate, and optionally
# random_foreground / random_background to draw a seeded random layout),
# then one line per fruit, "x y z radius row_tag", and one per leaf box,
# "occluder x0 y0 z0 x1 y1 z1".  Blank lines and ``#`` comments are ignored.


def parse_scene(text, seed=0, calib=None):
    header, fruits, boxes = {}, [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if "=" in line:
                key, _, value = line.partition("=")
                header[key.strip()] = value.strip()
                continue
            parts = line.split()
            if parts[0] == "occluder":
                if len(parts) != 7:
                    raise ValueError("occluder needs 6 numbers")
                nums = [float(x) for x in parts[1:]]
                boxes.append(Box(tuple(nums[:3]), tuple(nums[3:])))
                continue
            if len(parts) != 5:
                raise ValueError("fruit needs 'x y z radius row_tag'")
            tag = ROW_TAGS.get(parts[4].lower())
            if tag is None:
                raise ValueError(f"unknown row tag {parts[4]!r}")
            x, y, z, r = (float(p) for p in parts[:4])
            fruits.append(Fruit((x, y, z), r, tag))
        except ValueError as exc:
            raise InvalidSpec(f"scene line {lineno}: {exc}") from None
    known = {"rail_length", "speed", "frame_rate", "random_foreground", "random_background"}
    unknown = set(header) - known
    if unknown:
        raise InvalidSpec(f"unknown scene keys: {sorted(unknown)}")
    try:
        rail = float(header.get("rail_length", 3.0))
        speed = float(header.get("speed", 0.2))
        rate = float(header.get("frame_rate", 15.0))
        n_fg = int(header.get("random_foreground", 0))
        n_bg = int(header.get("random_background", 0))
    except ValueError as exc:
        raise InvalidSpec(f"scene header: {exc}") from None
    if n_fg or n_bg:
        drawn = random_scene_spec(
            seed, n_foreground=n_fg, n_background=n_bg, rail_length=rail, calib=calib
        )
        fruits = fruits + list(drawn.fruits)
    spec = SceneSpec(tuple(fruits), rail, speed, rate, tuple(boxes))
    spec.validate()
    return spec


def format_scene(spec):
    lines = [
        f"rail_length = {spec.rail_length!r}",
        f"speed = {spec.speed!r}",
        f"frame_rate = {spec.frame_rate!r}",
    ]
    for f in spec.fruits:
        lines.append(" ".join(repr(float(c)) for c in (*f.center, f.radius)) + f" {f.row}")
    for b in spec.occluders:
        lines.append("occluder " + " ".join(repr(float(c)) for c in (*b.lo, *b.hi)))
    return "\n".join(lines) + "\n"


# -- noise ----------------------------------------------------------------------


def odometry_drift(noise, frame_index):
    """Accumulated encoder error at ``frame_index`` (random walk, one step per frame)."""
    if noise.odometry_sigma == 0 or frame_index == 0:
        return 0.0
    rng = np.random.default_rng([noise.seed, 0x0D0])
    return float(noise.odometry_sigma * rng.standard_normal(frame_index).sum())


def perturb(frame, noise):
    """Apply detector and odometry noise to a clean frame, seeded per frame."""
    if noise.is_zero:
        return frame
    rng = np.random.default_rng([noise.seed, frame.frame_index])
    depth = frame.depth
    height, width = depth.shape
    masks, confs, ids = [], [], []
    gt_ids = frame.gt_ids or [None] * len(frame.detections)
    small = noise.small_object_area * width * height
    for mask, conf, gid in zip(frame.detections.masks, frame.detections.confidences, gt_ids):
        recall = 1.0 - noise.dropout_prob
        if small > 0:
            recall *= min(1.0, mask.area / small)
        if rng.random() >= recall:
            continue
        j = int(rng.integers(-noise.mask_jitter, noise.mask_jitter + 1)) if noise.mask_jitter else 0
        mask = mask.morph(j)
        if mask.empty:
            continue
        masks.append(mask)
        confs.append(conf)
        ids.append(gid)

    n_fp = int(rng.poisson(noise.false_positive_rate)) if noise.false_positive_rate else 0
    if n_fp:
        depth = depth.copy()
        for _ in range(n_fp):
            m = disk(
                width,
                height,
                rng.uniform(0, width),
                rng.uniform(0, height),
                rng.uniform(0.01, 0.04) * width,
            )
            d = round(rng.uniform(0.3, 1.3), 3)
            if m.empty:
                continue
            t, l, b, r = m.bbox
            depth[t:b, l:r][m.crop] = d
            masks.append(m)
            confs.append(float(rng.uniform(0.5, 1.0)))
            ids.append(-1)

    return replace(
        frame,
        odometry_distance=frame.odometry_distance + odometry_drift(noise, frame.frame_index),
        detections=FrameDetections(frame.frame_index, masks, confs),
        depth=depth,
        gt_ids=ids,
    )


class SimulatedRow:
    """Lazy sequence of (optionally perturbed) frames over a whole scene.

    Ground truth accumulates from the clean renders as frames are produced,
    so a full pass over the row yields ``gt_count`` without rendering twice.
    """

    def __init__(self, scene, calib=None, noise=None, name="sim"):
        self.scene = scene
        self.calibration = calib or Calibration.default()
        self.noise = noise
        self.name = name
        self._seen = {}

    def __len__(self):
        return self.scene.spec.n_frames

    def clean_frame(self, i):
        if not 0 <= i < len(self):
            raise IndexError(i)
        frame = render_frame(
            self.scene,
            i * self.scene.spec.step,
            self.calibration.intrinsics,
            self.calibration.extrinsics,
            frame_index=i,
        )
        fg = self.scene.foreground
        self._seen[i] = {g for g in frame.gt_ids if g >= 0 and fg[g]}
        return frame

    def __getitem__(self, i):
        frame = self.clean_frame(i)
        if self.noise is not None:
            frame = perturb(frame, self.noise)
        return frame

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def color(self, i):
        return None

    @property
    def gt_count(self):
        """Distinct foreground fruits detected in at least one clean frame."""
        for i in range(len(self)):
            if i not in self._seen:
                self.clean_frame(i)
        return len(set().union(*self._seen.values())) if self._seen else 0


def benchmark_calibration():
    """Default camera at half resolution, same field of view."""
    return Calibration(Intrinsics.default().scaled(0.5), default_extrinsics())


def benchmark_rows(n_rows=10, first_seed=0, noise=True, **scene_kwargs):
    """Noisy simulated rows used for the counting comparison.

    Row ``k`` uses seed ``first_seed + k`` for both the layout and the noise.
    """
    calib = benchmark_calibration()
    rows = []
    for seed in range(first_seed, first_seed + n_rows):
        spec = random_scene_spec(seed, calib=calib, **scene_kwargs)
        rows.append(
            SimulatedRow(
                generate_scene(spec, seed),
                calib=calib,
                noise=NoiseSpec(seed=seed) if noise else None,
                name=f"row{seed:03d}",
            )
        )
    return rows


def ground_truth_count(frames, scene):
    """Distinct foreground fruits among the detections of ``frames``."""
    ids = set()
    for f in frames:
        ids.update(g for g in (f.gt_ids or []) if g is not None and g >= 0)
    return sum(1 for g in ids if scene.foreground[g])
