"""Simulate a short row, save it to disk and build a PLY row map.

Run with ``python3 demos/build_row_map.py [out_dir]``.  Open the resulting
``row_map.ply`` in any point-cloud viewer.
"""

import sys
import tempfile
from pathlib import Path

from rowtracker import MapConfig, build_map, load_dataset, save_dataset, write_ply
from rowtracker.geom import Calibration, Intrinsics, default_extrinsics
from rowtracker.sim import SimulatedRow, generate_scene, random_scene_spec

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="rowmap-"))
calib = Calibration(Intrinsics.default().scaled(0.5), default_extrinsics())

spec = random_scene_spec(11, n_foreground=15, n_background=5, rail_length=2.0, calib=calib)
row = SimulatedRow(generate_scene(spec), calib)
save_dataset(row, out / "row", calib, name="demo")
ds = load_dataset(out / "row")
print(f"saved {len(ds)} frames to {out / 'row'}")

# one frame in ten keeps the map small; the default keeps one in sixty
cloud = build_map(ds, MapConfig(skip=10))
write_ply(cloud, out / "row_map.ply")
lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
print(f"{len(cloud)} points from {len(set(cloud.source_frame.tolist()))} frames")
print(f"extent x {lo[0]:.2f}..{hi[0]:.2f} m, depth y {lo[1]:.2f}..{hi[1]:.2f} m")
print(f"wrote {out / 'row_map.ply'}")
