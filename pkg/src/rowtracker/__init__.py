"""Fruit counting by tracking-via-segmentation, plus RGB-D row mapping.

The camera rides a rail past a crop row.  Per-frame instance masks are
linked into tracklets by mask IoU; the ``rp`` and ``df`` tracker variants
first re-project each tracklet's mask into the new frame using odometry and
depth, and ``df`` also drops detections that lie mostly outside the row's
depth band.  A ray-cast simulator supplies rows with exact ground truth.
"""

from .dataset import RowDataset, load_dataset, save_dataset
from .errors import (
    CorruptManifest,
    DegenerateInput,
    DimensionMismatch,
    EmptyInput,
    EmptyMask,
    InvalidSpec,
    IoFailure,
    MissingCalibration,
    MissingFile,
    NonPositiveDepth,
    OutOfOrderFrame,
    RowTrackerError,
    UsageError,
    ZeroGroundTruth,
)
from .evaluation import CountReport, aggregate, normalized_error, r_squared, sweep
from .geom import (
    Calibration,
    Intrinsics,
    Transform,
    back_project,
    camera_motion,
    default_extrinsics,
    project,
    rail_motion,
    reproject_mask,
)
from .masks import Mask, mask_iou, rle_decode, rle_encode
from .rowmap import MapConfig, PointCloud, build_map, frame_cloud, read_ply, write_ply
from .sim import NoiseSpec, SceneSpec, SimulatedRow, benchmark_rows, generate_scene, random_scene_spec
from .track import (
    FilterConfig,
    FrameDetections,
    FrameRecord,
    TrackerConfig,
    TrackerState,
    count_row,
    depth_retain,
    finalize,
    run_tracker,
    step,
)

__version__ = "0.1.0"
