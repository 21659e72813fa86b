import io
import os
import subprocess
import sys

import numpy as np
import pytest

from rowtracker.cli import main
from rowtracker.dataset import decode_depth, encode_depth, load_dataset, save_dataset
from rowtracker.errors import CorruptManifest, DimensionMismatch, InvalidSpec, MissingFile
from rowtracker.geom import Calibration, Intrinsics, default_extrinsics, format_calibration
from rowtracker.rowmap import read_ply
from rowtracker.sim import NoiseSpec, SimulatedRow, generate_scene, random_scene_spec

QUARTER = Calibration(Intrinsics.default().scaled(0.25), default_extrinsics())
SCENE = "rail_length = 1.0\nrandom_foreground = 4\nrandom_background = 2\n0.5 0.6 1.2 0.04 fg\n"


@pytest.fixture(scope="module")
def noisy_row():
    spec = random_scene_spec(6, n_foreground=5, n_background=3, rail_length=1.0, calib=QUARTER)
    return SimulatedRow(generate_scene(spec), QUARTER, NoiseSpec(seed=6, false_positive_rate=0.5))


@pytest.fixture
def saved(tmp_path, noisy_row):
    root = tmp_path / "row"
    save_dataset(noisy_row, root, QUARTER)
    return root


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


# -- dataset files ------------------------------------------------------------


def test_depth_encoding_roundtrip():
    depth = np.array([[0.0, 0.4567], [1.2, 65.535]])
    back = decode_depth(encode_depth(depth))
    assert np.array_equal(back, np.round(depth * 1000) / 1000)
    with pytest.raises(InvalidSpec):
        encode_depth(np.array([[-0.1]]))


def test_saved_dataset_roundtrip_is_exact(saved, noisy_row):
    ds = load_dataset(saved)
    assert len(ds) == len(noisy_row)
    assert ds.gt_count == noisy_row.gt_count
    assert ds.calibration.intrinsics == QUARTER.intrinsics
    n_fp = 0
    for a, b in zip(noisy_row, ds):
        assert a.frame_index == b.frame_index
        assert b.odometry_distance == a.odometry_distance
        assert a.detections.masks == b.detections.masks
        assert b.detections.confidences == [float(c) for c in a.detections.confidences]
        assert b.gt_ids == a.gt_ids
        # depth is stored in millimetres, which the simulator already quantises to
        assert np.array_equal(a.depth, b.depth)
        n_fp += b.gt_ids.count(-1)
    assert n_fp > 0


def test_save_replaces_existing_directory(saved, noisy_row):
    (saved / "stale.txt").write_text("x")
    save_dataset(noisy_row, saved, QUARTER)
    assert not (saved / "stale.txt").exists()
    assert not [p for p in saved.parent.iterdir() if p.name.startswith(".")]


def test_missing_frame_file(saved):
    os.remove(saved / "depth" / "000007.depth")
    with pytest.raises(MissingFile) as info:
        load_dataset(saved)
    assert info.value.frame == 7


def test_depth_size_must_match_calibration(saved):
    big = Calibration(Intrinsics.default(), default_extrinsics())
    (saved / "calib.txt").write_text(format_calibration(big))
    with pytest.raises(DimensionMismatch) as info:
        load_dataset(saved)
    assert info.value.frame == 0


@pytest.mark.parametrize(
    "old, new",
    [
        ("format = rowtracker-dataset 1", "format = something-else"),
        ("frames = ", "frame_count = "),
        ("frames = ", "garbage\nframes = "),
    ],
)
def test_corrupt_manifest(saved, old, new):
    path = saved / "manifest.txt"
    path.write_text(path.read_text().replace(old, new))
    with pytest.raises(CorruptManifest):
        load_dataset(saved)


def test_odometry_must_be_monotone(saved):
    path = saved / "odometry.csv"
    lines = path.read_text().splitlines()
    lines[3] = "2,-5.0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptManifest):
        load_dataset(saved)


def test_missing_directory(tmp_path):
    with pytest.raises(MissingFile):
        load_dataset(tmp_path / "nope")


# -- command line -------------------------------------------------------------


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "scene.txt"
    path.write_text(SCENE)
    return path


def test_cli_track_counts_clean_row(tmp_path, scene_file):
    data = tmp_path / "clean"
    code, msg = run("simulate", "--scene", scene_file, "--out", data, "--scale", 0.25, "--clean", "--seed", 2)
    assert code == 0 and "gt_count" in msg
    gt = load_dataset(data).gt_count
    code, out = run("track", "--data", data, "--variant", "df", "--iou", 0.3)
    assert code == 0
    assert int(out) == gt


def test_cli_track_with_config_file(tmp_path, scene_file):
    data = tmp_path / "clean"
    run("simulate", "--scene", scene_file, "--out", data, "--scale", 0.25, "--clean")
    cfg = tmp_path / "tracker.txt"
    cfg.write_text("variant = rp\nmin_hits = 1000\n")
    code, out = run("track", "--data", data, "--config", cfg)
    assert (code, int(out)) == (0, 0)


def test_cli_map_writes_ply(tmp_path, saved):
    ply = tmp_path / "map.ply"
    code, msg = run("map", "--data", saved, "--out", ply, "--skip", 10)
    assert code == 0
    cloud = read_ply(ply)
    assert f"wrote {len(cloud)} points" in msg
    code, _ = run("map", "--data", saved, "--out", tmp_path / "map.bin.ply", "--skip", 10, "--binary")
    assert code == 0
    assert np.allclose(read_ply(tmp_path / "map.bin.ply").points, cloud.points, atol=1e-5)


def test_cli_sweep_writes_report(tmp_path, saved):
    dest = tmp_path / "report.csv"
    code, _ = run("sweep", "--data", saved, "--variants", "rp,df", "--iou", "0.3", "--out", dest)
    assert code == 0
    lines = dest.read_text().splitlines()
    assert lines[0] == "row_id,variant,iou,gt,pred,ne"
    assert sum(l.startswith("row,") for l in lines) == 2
    assert sum(l.startswith("#agg,") for l in lines) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        [],
        ["track"],
        ["track", "--data", "x", "--iou", "high"],
        ["track", "--data", "x", "--variant", "zz"],
        ["sweep", "--data", "x", "--iou", "0.1,abc"],
        ["sweep", "--data", "x", "--variants", "bl,zz"],
        ["simulate", "--scene", "/no/such/scene.txt", "--out", "x"],
    ],
)
def test_cli_usage_errors(argv, capsys):
    code, _ = run(*argv)
    assert code == 2
    assert "usage error" in capsys.readouterr().err


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    code, _ = run("track", "--data", tmp_path / "missing")
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_cli_rejects_bad_log_level(monkeypatch, saved):
    monkeypatch.setenv("ROWTRACKER_LOG", "chatty")
    assert run("track", "--data", saved)[0] == 2
    monkeypatch.setenv("ROWTRACKER_LOG", "DEBUG")
    assert run("track", "--data", saved)[0] == 0


def test_module_entry_point(saved):
    proc = subprocess.run(
        [sys.executable, "-m", "rowtracker", "track", "--data", str(saved), "--variant", "df"],
        capture_output=True,
        text=True,
        env={**os.environ, "ROWTRACKER_LOG": "info"},
    )
    assert proc.returncode == 0
    assert proc.stdout.strip().isdigit()
    assert "INFO" in proc.stderr
