"""Counting metrics and the per-variant, per-IoU experiment grid."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateInput, EmptyInput, RowTrackerError, ZeroGroundTruth
from .track import FrameCache, TrackerConfig, TrackerState, finalize, step

log = logging.getLogger(__name__)


def normalized_error(gt, pred):
    """``|gt - pred| / gt`` for one row."""
    if gt <= 0:
        raise ZeroGroundTruth(f"normalized error is undefined for gt={gt}")
    return abs(gt - pred) / gt


def aggregate(errors):
    """Mean and population standard deviation."""
    errors = np.asarray(list(errors), dtype=float)
    if errors.size == 0:
        raise EmptyInput("cannot aggregate an empty list")
    return float(errors.mean()), float(errors.std())


def r_squared(gts, preds):
    """Coefficient of determination of ``preds`` against ``gts`` (may be negative)."""
    gts = np.asarray(gts, dtype=float)
    preds = np.asarray(preds, dtype=float)
    if gts.shape != preds.shape or gts.ndim != 1 or gts.size < 2:
        raise DegenerateInput("need two equal-length series of at least 2 values")
    ss_tot = float(((gts - gts.mean()) ** 2).sum())
    if ss_tot == 0:
        raise DegenerateInput("ground truth is constant")
    ss_res = float(((gts - preds) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass
class CountRecord:
    row_id: str
    variant: str
    iou: float
    gt: Optional[int]
    pred: Optional[int]
    error: Optional[str] = None

    @property
    def ne(self):
        if self.error or self.pred is None or not self.gt:
            return None
        return normalized_error(self.gt, self.pred)


@dataclass
class Aggregate:
    variant: str
    iou: float
    mean_ne: float
    std_ne: float
    r2: float
    n_rows: int


@dataclass
class CountReport:
    records: list = field(default_factory=list)

    def cells(self):
        seen = {}
        for r in self.records:
            seen.setdefault((r.variant, r.iou), None)
        return list(seen)

    def select(self, variant, iou):
        return [r for r in self.records if r.variant == variant and r.iou == iou]

    def aggregate(self, variant, iou):
        """Aggregates over usable rows; NaN where a metric is undefined.

        Failed cells are left out of everything; rows with gt = 0 are left
        out of the normalized error but kept for R².
        """
        rows = [r for r in self.select(variant, iou) if r.error is None and r.gt is not None]
        nes = [r.ne for r in rows if r.gt > 0]
        mean_ne, std_ne = aggregate(nes) if nes else (math.nan, math.nan)
        try:
            r2 = r_squared([r.gt for r in rows], [r.pred for r in rows])
        except DegenerateInput:
            r2 = math.nan
        return Aggregate(variant, iou, mean_ne, std_ne, r2, len(rows))

    def aggregates(self):
        return [self.aggregate(v, t) for v, t in self.cells()]

    def to_csv(self):
        out = io.StringIO()
        out.write("row_id,variant,iou,gt,pred,ne\n")
        flags = []
        for r in self.records:
            gt = "" if r.gt is None else str(r.gt)
            pred = "" if r.pred is None else str(r.pred)
            ne = r.ne
            out.write(f"{r.row_id},{r.variant},{_num(r.iou)},{gt},{pred},{'' if ne is None else _num(ne)}\n")
            if r.error:
                flags.append(f"#failed,{r.row_id},{r.variant},{_num(r.iou)},{_clean(r.error)}\n")
            elif r.gt == 0:
                flags.append(f"#zero_gt,{r.row_id},{r.variant},{_num(r.iou)}\n")
        for line in flags:
            out.write(line)
        for a in self.aggregates():
            out.write(
                f"#agg,{a.variant},{_num(a.iou)},{_num(a.mean_ne)},{_num(a.std_ne)},{_num(a.r2)}\n"
            )
        return out.getvalue()


def _num(x):
    return repr(float(x))


def _clean(msg):
    return str(msg).replace(",", ";").replace("\n", " ")


def parse_report_csv(text):
    """Read back the per-row records written by :meth:`CountReport.to_csv`."""
    records = []
    errors = {}
    lines = text.splitlines()
    for line in lines:
        if line.startswith("#failed,"):
            _, row_id, variant, iou, msg = line.split(",", 4)
            errors[(row_id, variant, float(iou))] = msg
    for line in lines[1:]:
        if not line or line.startswith("#"):
            continue
        row_id, variant, iou, gt, pred, _ne = line.split(",")
        key = (row_id, variant, float(iou))
        records.append(
            CountRecord(
                row_id,
                variant,
                float(iou),
                int(gt) if gt else None,
                int(pred) if pred else None,
                errors.get(key),
            )
        )
    return CountReport(records)


def sweep(datasets, variants, iou_thresholds, base=None, row_ids=None, observer=None):
    """Run the tracker for every (row, variant, threshold) cell.

    Each row is read once; all of its cells advance in lockstep over the
    same frames and share a per-frame cache.  A cell that raises is marked
    failed and the rest of the sweep carries on.

    ``observer(row_id, (variant, iou), frame, state)`` is called after every
    successful step, e.g. to audit which detections spawned tracklets.
    """
    datasets = list(datasets)
    variants = list(variants)
    thresholds = list(iou_thresholds)
    if not datasets or not variants or not thresholds:
        raise EmptyInput("sweep needs at least one dataset, variant and threshold")
    base = base or TrackerConfig()
    configs = {
        (v, t): TrackerConfig(
            variant=v,
            iou_threshold=t,
            max_misses=base.max_misses,
            min_hits=base.min_hits,
            start_zone=base.start_zone,
            stop_zone=base.stop_zone,
            confidence_floor=base.confidence_floor,
            depth_filter=base.depth_filter,
        )
        for v in variants
        for t in thresholds
    }
    report = CountReport()
    for k, ds in enumerate(datasets):
        row_id = row_ids[k] if row_ids else getattr(ds, "name", None) or f"row{k}"
        report.records.extend(_sweep_row(ds, row_id, configs, observer))
    return report


def _sweep_row(ds, row_id, configs, observer):
    states = {cell: TrackerState() for cell in configs}
    failed = {}
    K, T_ec = ds.calibration.intrinsics, ds.calibration.extrinsics
    try:
        for frame in ds:
            cache = FrameCache()
            for cell, cfg in configs.items():
                if cell in failed:
                    continue
                try:
                    states[cell] = step(states[cell], frame, cfg, K, T_ec, cache=cache)
                except RowTrackerError as exc:
                    failed[cell] = exc
                    log.warning("row %s cell %s failed: %s", row_id, cell, exc)
                    continue
                if observer is not None:
                    observer(row_id, cell, frame, states[cell])
        gt = ds.gt_count
    except RowTrackerError as exc:
        log.warning("row %s failed: %s", row_id, exc)
        return [CountRecord(row_id, v, t, None, None, str(exc)) for v, t in configs]
    out = []
    for (v, t), cfg in configs.items():
        if (v, t) in failed:
            out.append(CountRecord(row_id, v, t, gt, None, str(failed[(v, t)])))
        else:
            out.append(CountRecord(row_id, v, t, gt, finalize(states[(v, t)], cfg)))
    return out
