"""KITTI-style detection evaluation: matching, interpolated AP, difficulty."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Cuboid, bev_iou, iou_3d
from .kitti_io import LabelRecord, to_cuboid


class Difficulty(str, Enum):
    EASY = "easy"
    MODERATE = "moderate"
    HARD = "hard"


DIFFICULTIES = (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD)

# KITTI devkit thresholds: (min 2D bbox height px, max occlusion, max truncation)
_KITTI_REGIMES = {
    Difficulty.EASY: (40.0, 0, 0.15),
    Difficulty.MODERATE: (25.0, 1, 0.30),
    Difficulty.HARD: (25.0, 2, 0.50),
}

# synthetic data difficulty by in-box point count
_SYNTH_REGIMES = {
    Difficulty.EASY: 120,
    Difficulty.MODERATE: 40,
    Difficulty.HARD: 10,
}


@dataclass(frozen=True)
class Detection:
    cuboid: Cuboid
    confidence: float
    scene_id: str


@dataclass(frozen=True)
class GroundTruth:
    cuboid: Cuboid
    scene_id: str
    difficulties: frozenset[Difficulty]
    is_dontcare: bool = False


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.7
    iou_kind: str = "3d"            # "bev" | "3d"
    difficulty: Difficulty = Difficulty.MODERATE
    ap_protocol: str = "11"         # "11" | "40"

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must be in (0, 1]")
        if self.iou_kind not in ("bev", "3d"):
            raise ValueError("iou_kind must be 'bev' or '3d'")
        if self.ap_protocol not in ("11", "40"):
            raise ValueError("ap_protocol must be '11' or '40'")


def assign_difficulty_kitti(rec: LabelRecord) -> frozenset[Difficulty]:
    bbox_h = rec.bbox2d[3] - rec.bbox2d[1]
    out = set()
    for diff, (min_h, max_occ, max_trunc) in _KITTI_REGIMES.items():
        if bbox_h >= min_h and rec.occlusion <= max_occ and rec.truncation <= max_trunc:
            out.add(diff)
    return frozenset(out)


def assign_difficulty_synthetic(point_count: int) -> frozenset[Difficulty]:
    return frozenset(d for d, min_pts in _SYNTH_REGIMES.items()
                     if point_count >= min_pts)


def gt_from_label(rec: LabelRecord, scene_id: str) -> GroundTruth:
    if rec.cls == "DontCare":
        # DontCare rows carry no usable 3D extent; give them a unit placeholder
        # footprint at the 2D location so matching can still ignore overlaps.
        cub = Cuboid(rec.x, rec.y, rec.z, 1.0, 1.0, 1.0, 0.0)
        return GroundTruth(cub, scene_id, frozenset(), is_dontcare=True)
    return GroundTruth(to_cuboid(rec), scene_id, assign_difficulty_kitti(rec))


def _iou(a: Cuboid, b: Cuboid, kind: str) -> float:
    return bev_iou(a, b) if kind == "bev" else iou_3d(a, b)


def match_detections(dets: list[Detection], gts: list[GroundTruth],
                     cfg: EvalConfig) -> tuple[np.ndarray, np.ndarray]:
    """Greedy per-scene matching by descending confidence.

    Returns (flags per detection, matched flags per counted GT). Flags:
    1 = TP, 0 = FP, -1 = ignored (matched a DontCare or out-of-regime GT).
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    counted = [g for g in gts if not g.is_dontcare and cfg.difficulty in g.difficulties]
    ignored = [g for g in gts if g.is_dontcare or cfg.difficulty not in g.difficulties]
    matched = np.zeros(len(counted), dtype=bool)
    flags = np.zeros(len(dets), dtype=np.int8)
    for i in order:
        det = dets[i]
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(counted):
            if matched[j]:
                continue
            v = _iou(det.cuboid, gt.cuboid, cfg.iou_kind)
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0 and best_iou > cfg.iou_threshold:
            matched[best_j] = True
            flags[i] = 1
            continue
        ignore = False
        for gt in ignored:
            thresh = 0.0 if gt.is_dontcare else cfg.iou_threshold
            v = _iou(det.cuboid, gt.cuboid, cfg.iou_kind)
            if (gt.is_dontcare and v > 0.0) or (not gt.is_dontcare and v > thresh):
                ignore = True
                break
        flags[i] = -1 if ignore else 0
    return flags, matched


def _recall_anchors(protocol: str) -> np.ndarray:
    if protocol == "11":
        return np.linspace(0.0, 1.0, 11)
    return np.arange(1, 41) / 40.0


def average_precision(dets: list[Detection], gts: list[GroundTruth],
                      cfg: EvalConfig) -> float | None:
    """Interpolated AP over all scenes; None when the regime has no GT."""
    scenes = sorted({g.scene_id for g in gts} | {d.scene_id for d in dets})
    all_flags: list[int] = []
    all_conf: list[float] = []
    total_gt = 0
    for sid in scenes:
        sdets = [d for d in dets if d.scene_id == sid]
        sgts = [g for g in gts if g.scene_id == sid]
        flags, _ = match_detections(sdets, sgts, cfg)
        total_gt += sum(1 for g in sgts
                        if not g.is_dontcare and cfg.difficulty in g.difficulties)
        for d, f in zip(sdets, flags):
            if f >= 0:
                all_flags.append(int(f))
                all_conf.append(d.confidence)
    if total_gt == 0:
        return None
    if not all_flags:
        return 0.0
    order = np.argsort(-np.asarray(all_conf), kind="stable")
    tp = np.cumsum(np.asarray(all_flags)[order] == 1)
    fp = np.cumsum(np.asarray(all_flags)[order] == 0)
    recall = tp / total_gt
    precision = tp / np.maximum(tp + fp, 1)
    ap = 0.0
    anchors = _recall_anchors(cfg.ap_protocol)
    for r in anchors:
        mask = recall >= r - 1e-12
        ap += float(precision[mask].max()) if mask.any() else 0.0
    return ap / len(anchors)


def evaluate_table(dets: list[Detection], gts: list[GroundTruth],
                   iou_threshold: float, ap_protocol: str = "11"
                   ) -> dict[str, dict[str, float | None]]:
    """AP for every difficulty x {bev, 3d} combination."""
    table: dict[str, dict[str, float | None]] = {}
    for kind in ("bev", "3d"):
        row: dict[str, float | None] = {}
        for diff in DIFFICULTIES:
            cfg = EvalConfig(iou_threshold=iou_threshold, iou_kind=kind,
                             difficulty=diff, ap_protocol=ap_protocol)
            row[diff.value] = average_precision(dets, gts, cfg)
        table[kind] = row
    return table


def format_table(table: dict[str, dict[str, float | None]],
                 iou_threshold: float) -> str:
    def cell(v: float | None) -> str:
        return "   -  " if v is None else f"{100 * v:6.2f}"
    lines = [
        f"{'':10s} {'Easy':>6s} {'Moderate':>8s} {'Hard':>6s}",
        f"BEV@{iou_threshold:.1f}   {cell(table['bev']['easy'])} "
        f"{cell(table['bev']['moderate']):>8s} {cell(table['bev']['hard'])}",
        f"3D @{iou_threshold:.1f}   {cell(table['3d']['easy'])} "
        f"{cell(table['3d']['moderate']):>8s} {cell(table['3d']['hard'])}",
    ]
    return "\n".join(lines) + "\n"


def machine_records(table: dict[str, dict[str, float | None]],
                    iou_threshold: float) -> str:
    recs = []
    for kind, row in table.items():
        for diff, v in row.items():
            val = "nan" if v is None else f"{v:.6f}"
            recs.append(f"kind={kind} difficulty={diff} iou={iou_threshold} ap={val}\n")
    return "".join(recs)
