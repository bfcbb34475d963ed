"""Cylindrical proposal generation, center-aware NMS, cropping, oriented NMS."""

from __future__ import annotations

import numpy as np

from ..geometry import (Cuboid, CylinderProposal, PointCloud, bev_iou,
                        canonicalize, points_in_cylinder)
from ..weak_labels import BinEncoderConfig, decode_center_field
from .config import ClassProfile


class EmptyProposalError(ValueError):
    """A proposal cylinder contains no points; callers drop it upstream."""


def generate_proposals(xyzi: np.ndarray, fg: np.ndarray, center_code: np.ndarray,
                       profile: ClassProfile,
                       bin_cfg: BinEncoderConfig | None = None,
                       fg_threshold: float = 0.1) -> list[CylinderProposal]:
    """One proposal per point with foreground score above threshold.

    Each qualifying point votes a center by decoding its predicted bin and
    the residual of that bin; the sourcing point's score is the confidence.
    """
    bin_cfg = bin_cfg or BinEncoderConfig()
    nb = bin_cfg.num_bins
    fg = np.asarray(fg).reshape(-1)
    keep = fg > fg_threshold
    if profile.search_x is not None:
        keep &= (xyzi[:, 0] >= profile.search_x[0]) & (xyzi[:, 0] <= profile.search_x[1])
    if profile.search_z is not None:
        keep &= (xyzi[:, 2] >= profile.search_z[0]) & (xyzi[:, 2] <= profile.search_z[1])
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        return []
    code = center_code[idx]
    bins = np.stack([np.argmax(code[:, :nb], axis=1),
                     np.argmax(code[:, 2 * nb:3 * nb], axis=1)], axis=1)
    res = np.stack([code[np.arange(idx.size), nb + bins[:, 0]],
                    code[np.arange(idx.size), 3 * nb + bins[:, 1]]], axis=1)
    votes = decode_center_field(xyzi[idx][:, [0, 2]], bins, res, bin_cfg)
    return [CylinderProposal(votes[i, 0], votes[i, 1], profile.proposal_radius,
                             float(fg[j]))
            for i, j in enumerate(idx)]


def aggregate_centers(xyzi: np.ndarray, fg: np.ndarray,
                      proposals: list[CylinderProposal],
                      fg_threshold: float = 0.1) -> list[CylinderProposal]:
    """Re-center proposals at the score-weighted centroid of their support.

    Per-point center votes are noisy at small training scales; the weighted
    BEV centroid of the foreground points inside each cylinder is a much
    more stable center estimate, so each surviving proposal is snapped to
    it. Proposals whose cylinder holds no qualifying point pass through
    unchanged.
    """
    fg = np.asarray(fg).reshape(-1)
    xz = xyzi[:, [0, 2]]
    out: list[CylinderProposal] = []
    for p in proposals:
        d2 = (xz[:, 0] - p.cx) ** 2 + (xz[:, 1] - p.cz) ** 2
        m = (d2 <= p.radius ** 2) & (fg > fg_threshold)
        if not m.any():
            out.append(p)
            continue
        w = fg[m]
        cx, cz = (xz[m] * w[:, None]).sum(axis=0) / w.sum()
        out.append(CylinderProposal(float(cx), float(cz), p.radius, p.confidence))
    return out


def ca_nms(proposals: list[CylinderProposal],
           min_distance: float = 4.0) -> list[CylinderProposal]:
    """Greedy center dedup: keep by descending confidence, require every kept
    center to be farther than `min_distance` from previously kept ones."""
    order = sorted(range(len(proposals)),
                   key=lambda i: (-proposals[i].confidence, i))
    kept: list[CylinderProposal] = []
    for i in order:
        p = proposals[i]
        if all((p.cx - k.cx) ** 2 + (p.cz - k.cz) ** 2 > min_distance ** 2
               for k in kept):
            kept.append(p)
    return kept


def resample_rows(n_rows: int, target: int) -> np.ndarray:
    """Deterministic exactly-`target` row indices: evenly strided subsample
    when long, cyclic repetition when short."""
    if n_rows <= 0:
        raise ValueError("no rows to resample")
    if n_rows >= target:
        return np.round(np.linspace(0, n_rows - 1, target)).astype(np.intp)
    return np.arange(target, dtype=np.intp) % n_rows


def crop_proposal(cloud: PointCloud, prop: CylinderProposal, fg: np.ndarray,
                  num_points: int = 512) -> np.ndarray:
    """(num_points, 5) canonical block for a cylinder: translation-only frame,
    features [x, y, z, intensity, foreground score]."""
    inside = points_in_cylinder(cloud, prop)
    if inside.size == 0:
        raise EmptyProposalError(f"no points in cylinder ({prop.cx:.1f}, {prop.cz:.1f})")
    rows = inside[resample_rows(inside.size, num_points)]
    local = canonicalize(cloud.select(rows), prop)
    return np.column_stack([local.xyzi, np.asarray(fg).reshape(-1)[rows]])


def crop_cuboid(cloud: PointCloud, cub: Cuboid, fg: np.ndarray,
                num_points: int = 512, margin: float = 0.3) -> np.ndarray:
    """(num_points, 5) canonical block for a cuboid crop with a context margin;
    full translation + yaw canonicalization."""
    reach = 0.5 * float(np.hypot(cub.w, cub.l)) + margin
    inside = points_in_cylinder(
        cloud, CylinderProposal(cub.cx, cub.cz, reach))
    if inside.size == 0:
        raise EmptyProposalError(f"no points around cuboid ({cub.cx:.1f}, {cub.cz:.1f})")
    rows = inside[resample_rows(inside.size, num_points)]
    local = canonicalize(cloud.select(rows), cub)
    return np.column_stack([local.xyzi, np.asarray(fg).reshape(-1)[rows]])


def oriented_nms(cuboids: list[Cuboid], confidences: list[float],
                 iou_threshold: float = 0.3) -> list[int]:
    """Greedy BEV-IoU suppression; returns kept indices by descending confidence."""
    order = sorted(range(len(cuboids)), key=lambda i: (-confidences[i], i))
    kept: list[int] = []
    for i in order:
        if all(bev_iou(cuboids[i], cuboids[k]) <= iou_threshold for k in kept):
            kept.append(i)
    return kept
