"""Training loops for both detector stages, plus checkpoint bundling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..engine.checkpoint import load_arrays, save_arrays
from ..engine.optim import Adam
from ..engine.tensor import ParamTensor
from ..geometry import Cuboid, CylinderProposal, PointCloud, cuboid_to_canonical, decanonicalize_cuboid
from ..weak_labels import (BinEncoderConfig, encode_center_field,
                           pseudo_foreground_field, select_support_points)
from .augment import SceneSample, augment_proposal, augment_scene, extract_instance
from .config import (ClassProfile, LossConfig, Stage1Config, Stage2Config,
                     TrainConfig, PROFILES)
from .losses import bin_loss, box_loss, confidence_loss, seg_loss
from .proposals import (EmptyProposalError, aggregate_centers, ca_nms,
                        crop_cuboid, crop_proposal, generate_proposals)
from .stage1 import Stage1Net
from .stage2 import Stage2Net


@dataclass
class LossLog:
    lines: list[str]

    def write(self, path: str | Path):
        Path(path).write_text("".join(self.lines))


def _scene_loss(net: Stage1Net, sample: SceneSample, profile: ClassProfile,
                loss_cfg: LossConfig, rng: np.random.Generator):
    xyzi, fg_pred, center = net.forward_scene(sample.cloud, rng)
    cloud = PointCloud(xyzi)
    pseudo = pseudo_foreground_field(cloud, sample.clicks, profile.pseudo_config())
    s_loss = seg_loss(fg_pred.reshape(-1), pseudo, loss_cfg)

    bl_x, br_x, bl_z, br_z = net.split_center(center)
    bin_terms = []
    for click in sample.clicks:
        rows = select_support_points(cloud, click, pseudo,
                                     cfg=profile.pseudo_config())
        if rows.size == 0:
            continue
        bins, res = encode_center_field(xyzi[rows][:, [0, 2]], click,
                                        net.cfg.bin_cfg)
        bin_terms.append(
            bin_loss(bl_x.gather_rows(rows), br_x.gather_rows(rows),
                     bins[:, 0], res[:, 0], loss_cfg)
            + bin_loss(bl_z.gather_rows(rows), br_z.gather_rows(rows),
                       bins[:, 1], res[:, 1], loss_cfg))
    if bin_terms:
        b_loss = bin_terms[0]
        for t in bin_terms[1:]:
            b_loss = b_loss + t
        b_loss = b_loss * (1.0 / len(bin_terms))
    else:
        b_loss = ParamTensor(0.0)
    return s_loss, b_loss


def train_stage1(dataset: list[SceneSample], s1_cfg: Stage1Config,
                 loss_cfg: LossConfig, train_cfg: TrainConfig,
                 profile: ClassProfile,
                 net: Stage1Net | None = None) -> tuple[Stage1Net, LossLog]:
    if not dataset:
        raise ValueError("empty stage-1 dataset")
    rng = np.random.default_rng(train_cfg.seed)
    net = net or Stage1Net(s1_cfg, rng)
    opt = Adam(net.parameters(), lr=train_cfg.lr,
               weight_decay=train_cfg.weight_decay)
    insert_pool = []
    if train_cfg.augment:
        for s in dataset[:50]:
            for c in s.clicks[:2]:
                inst = extract_instance(s, c, profile.proposal_radius)
                if inst.shape[0] >= 30:
                    insert_pool.append((inst, c.cls))
    log = LossLog([])
    for it in range(train_cfg.stage1_iterations):
        opt.zero_grad()
        seg_total = 0.0
        bin_total = 0.0
        picks = rng.integers(len(dataset), size=train_cfg.stage1_batch)
        total = None
        for si in picks:
            sample = dataset[si]
            if train_cfg.augment:
                sample = augment_scene(sample, rng, insert_pool)
            s_loss, b_loss = _scene_loss(net, sample, profile, loss_cfg, rng)
            term = s_loss + loss_cfg.center_loss_weight * b_loss
            total = term if total is None else total + term
            seg_total += s_loss.item()
            bin_total += b_loss.item()
        (total * (1.0 / train_cfg.stage1_batch)).backward()
        opt.step()
        if it % train_cfg.log_every == 0 or it == train_cfg.stage1_iterations - 1:
            n = train_cfg.stage1_batch
            log.lines.append(f"{it} seg={seg_total / n:.6f} "
                             f"center={bin_total / n:.6f} "
                             f"total={(seg_total + bin_total) / n:.6f}\n")
    return net, log


@dataclass
class ProposalSample:
    scene_index: int
    block: np.ndarray          # (P, 5) canonical crop
    gt_local: Cuboid           # groundtruth in the proposal's canonical frame
    gt_world: Cuboid
    proposal: CylinderProposal


def build_stage2_pool(dataset: list[SceneSample], s1_net: Stage1Net,
                      s2_cfg: Stage2Config, profile: ClassProfile,
                      train_cfg: TrainConfig, max_per_gt: int = 6
                      ) -> tuple[list[ProposalSample], list[tuple[np.ndarray, np.ndarray]]]:
    """Collect stage-2 training crops from stage-1 proposals near groundtruths.

    Returns the pool and per-scene (resampled xyzi, predicted fg, proposals)
    caches; cached proposals are CA-NMS'd and centroid re-centered, matching
    what inference feeds stage 2.
    Groundtruths that attract no stage-1 proposal get jittered fallback
    cylinders so sparse desk-scale runs still see every precise instance.
    """
    rng = np.random.default_rng(train_cfg.seed + 1)
    pool: list[ProposalSample] = []
    caches: list[tuple[np.ndarray, np.ndarray, list[CylinderProposal]]] = []
    for si, sample in enumerate(dataset):
        xyzi, fg_pred, center = s1_net.forward_scene(sample.cloud, rng)
        fg = fg_pred.data.reshape(-1)
        props = generate_proposals(xyzi, fg, center.data, profile,
                                   s1_net.cfg.bin_cfg)
        # match the inference-time proposal distribution
        props = aggregate_centers(xyzi, fg, ca_nms(props, profile.proposal_radius))
        caches.append((xyzi, fg, props))
        if not sample.cuboids:
            continue
        cloud = PointCloud(xyzi)
        for gt in sample.cuboids:
            near = [p for p in props
                    if math.hypot(p.cx - gt.cx, p.cz - gt.cz) < profile.gt_match_distance]
            if len(near) > max_per_gt:
                near = sorted(near, key=lambda p: -p.confidence)[:max_per_gt]
            while len(near) < 2:  # fallback keeps every instance trainable
                jx = gt.cx + rng.normal(0.0, 0.3)
                jz = gt.cz + rng.normal(0.0, 0.3)
                if math.hypot(jx - gt.cx, jz - gt.cz) >= profile.gt_match_distance:
                    continue
                near.append(CylinderProposal(jx, jz, profile.proposal_radius, 1.0))
            for p in near:
                try:
                    block = crop_proposal(cloud, p, fg, s2_cfg.num_points)
                except EmptyProposalError:
                    continue
                pool.append(ProposalSample(
                    si, block, cuboid_to_canonical(gt, p), gt, p))
    return pool, caches


def _anchored(profile: ClassProfile) -> tuple[float, float, float]:
    return profile.mean_size


def train_stage2(dataset: list[SceneSample], s1_net: Stage1Net,
                 s2_cfg: Stage2Config, loss_cfg: LossConfig,
                 train_cfg: TrainConfig, profile: ClassProfile
                 ) -> tuple[Stage2Net, Stage2Net, LossLog]:
    """Sequentially train the initial cuboid network then the refinement network."""
    pool, caches = build_stage2_pool(dataset, s1_net, s2_cfg, profile, train_cfg)
    if not pool:
        raise ValueError("no stage-2 training proposals (no precise instances?)")
    rng = np.random.default_rng(train_cfg.seed + 2)
    init_net = Stage2Net(s2_cfg, rng, with_confidence=False, name="init")
    refine_net = Stage2Net(s2_cfg, rng, with_confidence=True, name="refine")
    anchor = _anchored(profile)
    log = LossLog([])

    opt = Adam(init_net.parameters(), lr=train_cfg.lr,
               weight_decay=train_cfg.weight_decay)
    half = train_cfg.stage2_iterations // 2
    for it in range(half):
        opt.zero_grad()
        picks = rng.integers(len(pool), size=train_cfg.stage2_batch)
        blocks, gts = [], []
        for pi in picks:
            entry = pool[pi]
            block, gt = entry.block, entry.gt_local
            if train_cfg.augment:
                block, gt = augment_proposal(block, gt, rng)
            blocks.append(block)
            gts.append(gt)
        out, _ = init_net.forward_batch(blocks)
        loss = box_loss(out, gts, anchor, loss_cfg)
        loss.backward()
        opt.step()
        if it % train_cfg.log_every == 0 or it == half - 1:
            log.lines.append(f"{it} init_box={loss.item():.6f}\n")

    # refinement pool: the initial network's outputs become the inputs
    refine_entries = []
    for entry in pool:
        out, _ = init_net.forward(entry.block)
        initial = decanonicalize_cuboid(out.decode(0, anchor), entry.proposal)
        xyzi, fg, _ = caches[entry.scene_index]
        try:
            block = crop_cuboid(PointCloud(xyzi), initial, fg,
                                s2_cfg.num_points, s2_cfg.context_margin)
        except EmptyProposalError:
            continue
        refine_entries.append((entry.scene_index, block, initial,
                               cuboid_to_canonical(entry.gt_world, initial),
                               entry.gt_world))
    if not refine_entries:
        raise ValueError("no refinement training samples")

    # Background proposals (far from every click) teach the confidence head
    # to score clutter near zero; they carry no box-regression target.
    neg_entries: list[tuple[np.ndarray, Cuboid]] = []
    for si, sample in enumerate(dataset):
        xyzi, fg, props = caches[si]
        far = [p for p in props
               if all(math.hypot(p.cx - c.x_o, p.cz - c.z_o) > profile.proposal_radius
                      for c in sample.clicks)]
        far.sort(key=lambda p: -p.confidence)  # hardest negatives first
        for p in far[:4]:
            try:
                block = crop_proposal(PointCloud(xyzi), p, fg, s2_cfg.num_points)
                out, _ = init_net.forward(block)
                initial = decanonicalize_cuboid(out.decode(0, anchor), p)
                block2 = crop_cuboid(PointCloud(xyzi), initial, fg,
                                     s2_cfg.num_points, s2_cfg.context_margin)
            except EmptyProposalError:
                continue
            neg_entries.append((block2, initial))

    opt = Adam(refine_net.parameters(), lr=train_cfg.lr,
               weight_decay=train_cfg.weight_decay)
    for it in range(train_cfg.stage2_iterations - half):
        opt.zero_grad()
        picks = rng.integers(len(refine_entries), size=train_cfg.stage2_batch)
        blocks, gts_local, frames, gts_world = [], [], [], []
        for pi in picks:
            _, block, frame, gt_local, gt_world = refine_entries[pi]
            if train_cfg.augment:
                block, gt_local = augment_proposal(block, gt_local, rng)
            blocks.append(block)
            gts_local.append(gt_local)
            frames.append(frame)
            gts_world.append(gt_world)
        out, conf = refine_net.forward_batch(blocks)
        b_loss = box_loss(out, gts_local, anchor, loss_cfg)
        refined_world = [decanonicalize_cuboid(out.decode(i, anchor), frames[i])
                         for i in range(len(blocks))]
        c_loss = confidence_loss(conf, refined_world,
                                 [[g] for g in gts_world], loss_cfg)
        if neg_entries:
            neg_picks = rng.integers(len(neg_entries),
                                     size=max(train_cfg.stage2_batch // 2, 1))
            neg_blocks = [neg_entries[pi][0] for pi in neg_picks]
            neg_out, neg_conf = refine_net.forward_batch(neg_blocks)
            neg_world = [decanonicalize_cuboid(neg_out.decode(i, anchor),
                                               neg_entries[pi][1])
                         for i, pi in enumerate(neg_picks)]
            c_loss = c_loss + confidence_loss(neg_conf, neg_world,
                                              [[] for _ in neg_picks], loss_cfg)
        (b_loss + c_loss).backward()
        opt.step()
        if it % train_cfg.log_every == 0 or it == train_cfg.stage2_iterations - half - 1:
            log.lines.append(f"{it} refine_box={b_loss.item():.6f} "
                             f"conf={c_loss.item():.6f}\n")
    return init_net, refine_net, log


def save_checkpoint(path: str | Path, s1_net: Stage1Net | None,
                    init_net: Stage2Net | None, refine_net: Stage2Net | None,
                    profile: ClassProfile, preset_name: str):
    arrays: dict[str, np.ndarray] = {}
    if s1_net is not None:
        arrays.update({f"stage1/{k}": v for k, v in s1_net.state_dict().items()})
    if init_net is not None:
        arrays.update({f"stage2/{k}": v for k, v in init_net.state_dict().items()})
    if refine_net is not None:
        arrays.update({f"stage2/{k}": v for k, v in refine_net.state_dict().items()})
    save_arrays(path, arrays,
                meta={"profile": profile.name.lower(), "preset": preset_name})


def load_checkpoint(path: str | Path):
    """Rebuild whichever networks a checkpoint contains.

    Returns (s1_net, init_net, refine_net, profile, preset_name); nets absent
    from the file come back as None.
    """
    from .config import preset as get_preset
    arrays, meta = load_arrays(path)
    profile = PROFILES[meta["profile"]]
    preset_name = meta["preset"]
    s1_cfg, s2_cfg, _ = get_preset(preset_name)
    rng = np.random.default_rng(0)
    s1 = {k[len("stage1/"):]: v for k, v in arrays.items() if k.startswith("stage1/")}
    s2 = {k[len("stage2/"):]: v for k, v in arrays.items() if k.startswith("stage2/")}
    s1_net = init_net = refine_net = None
    if s1:
        s1_net = Stage1Net(s1_cfg, rng)
        s1_net.load_state_dict(s1)
    if any(k.startswith("init.") for k in s2):
        init_net = Stage2Net(s2_cfg, rng, with_confidence=False, name="init")
        init_net.load_state_dict({k: v for k, v in s2.items()
                                  if k.startswith("init.")})
    if any(k.startswith("refine.") for k in s2):
        refine_net = Stage2Net(s2_cfg, rng, with_confidence=True, name="refine")
        refine_net.load_state_dict({k: v for k, v in s2.items()
                                    if k.startswith("refine.")})
    return s1_net, init_net, refine_net, profile, preset_name
