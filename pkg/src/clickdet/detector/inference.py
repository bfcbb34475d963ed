"""Full detector inference and the two annotation modes."""

from __future__ import annotations

import numpy as np

from ..geometry import Cuboid, CylinderProposal, PointCloud, decanonicalize_cuboid
from ..kitti_io import ClickAnnotation
from ..weak_labels import pseudo_foreground_field
from .config import ClassProfile
from .proposals import (EmptyProposalError, aggregate_centers, ca_nms,
                        crop_cuboid, crop_proposal, generate_proposals,
                        oriented_nms)
from .stage1 import Stage1Net
from .stage2 import Stage2Net


def predict_cuboid(init_net: Stage2Net, refine_net: Stage2Net,
                   cloud: PointCloud, fg: np.ndarray, prop: CylinderProposal,
                   anchor: tuple[float, float, float]
                   ) -> tuple[Cuboid, float]:
    """Two-step cuboid prediction for one cylinder: generate then refine."""
    s2_cfg = init_net.cfg
    block = crop_proposal(cloud, prop, fg, s2_cfg.num_points)
    out, _ = init_net.forward(block)
    initial = decanonicalize_cuboid(out.decode(0, anchor), prop)
    block2 = crop_cuboid(cloud, initial, fg, s2_cfg.num_points,
                         s2_cfg.context_margin)
    out2, conf = refine_net.forward(block2)
    final = decanonicalize_cuboid(out2.decode(0, anchor), initial)
    return final, float(conf.data.reshape(-1)[0])


def infer_scene(cloud: PointCloud, s1_net: Stage1Net, init_net: Stage2Net,
                refine_net: Stage2Net, profile: ClassProfile,
                seed: int = 0, nms_iou: float = 0.3,
                final_conf_threshold: float = 0.0
                ) -> list[tuple[Cuboid, float]]:
    """stage-1 -> proposals -> CA-NMS -> centroid re-centering -> stage-2
    -> oriented NMS."""
    rng = np.random.default_rng(seed)
    xyzi, fg_pred, center = s1_net.forward_scene(cloud, rng)
    fg = fg_pred.data.reshape(-1)
    props = generate_proposals(xyzi, fg, center.data, profile, s1_net.cfg.bin_cfg)
    props = ca_nms(props, profile.proposal_radius)
    props = aggregate_centers(xyzi, fg, props)
    sampled = PointCloud(xyzi)
    anchor = profile.mean_size
    results: list[tuple[Cuboid, float]] = []
    for prop in props:
        try:
            cub, conf = predict_cuboid(init_net, refine_net, sampled, fg,
                                       prop, anchor)
        except EmptyProposalError:
            continue
        if conf >= final_conf_threshold:
            results.append((cub, conf))
    keep = oriented_nms([c for c, _ in results], [s for _, s in results], nms_iou)
    return [results[i] for i in keep]


def candidate_grid(click_x: float, click_z: float, spacing: float = 0.1,
                   side: int = 5) -> list[tuple[float, float]]:
    """side x side candidate centers around the click at `spacing` intervals."""
    half = (side - 1) / 2.0
    return [(click_x + (i - half) * spacing, click_z + (j - half) * spacing)
            for i in range(side) for j in range(side)]


class NoPointsError(ValueError):
    """All candidate cylinders around a click are empty."""


def active_annotate(cloud: PointCloud, click: ClickAnnotation,
                    init_net: Stage2Net, refine_net: Stage2Net,
                    profile: ClassProfile
                    ) -> tuple[Cuboid, float, list[tuple[float, float]]]:
    """Click-guided annotation: try the 5x5 grid of proposal centers around the
    click, score each with the refinement confidence, return the best."""
    centers = candidate_grid(click.x_o, click.z_o)
    anchor = profile.mean_size
    best: tuple[Cuboid, float] | None = None
    for cx, cz in centers:
        prop = CylinderProposal(cx, cz, profile.proposal_radius, 1.0)
        fg = pseudo_foreground_field(cloud, [ClickAnnotation(click.cls, cx, cz)],
                                     profile.pseudo_config())
        try:
            cub, conf = predict_cuboid(init_net, refine_net, cloud, fg, prop,
                                       anchor)
        except EmptyProposalError:
            continue
        if best is None or conf > best[1]:
            best = (cub, conf)
    if best is None:
        raise NoPointsError(
            f"no points near click ({click.x_o:.1f}, {click.z_o:.1f})")
    return best[0], best[1], centers
