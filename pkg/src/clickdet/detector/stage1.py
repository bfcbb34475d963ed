"""Stage-1 network: point backbone with foreground and center-vote heads."""

from __future__ import annotations

import numpy as np

from ..engine.layers import FeaturePropagation, Linear, SetAbstraction
from ..engine.tensor import ParamTensor
from ..geometry import PointCloud
from .config import Stage1Config


def resample_points(xyzi: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exactly-n row sample; repeats when short, subsamples without replacement."""
    m = xyzi.shape[0]
    if m == 0:
        raise ValueError("cannot resample an empty cloud")
    if m >= n:
        idx = rng.choice(m, size=n, replace=False)
    else:
        idx = np.concatenate([np.arange(m), rng.choice(m, size=n - m, replace=True)])
    return np.sort(idx)


class Stage1Net:
    """Hierarchical point encoder + per-point segmentation / center heads."""

    IN_FEATURES = 4  # absolute coordinates and intensity

    def __init__(self, cfg: Stage1Config, rng: np.random.Generator):
        self.cfg = cfg
        self.sa_layers: list[SetAbstraction] = []
        in_dim = self.IN_FEATURES
        for i, spec in enumerate(cfg.sa_specs):
            sa = SetAbstraction(rng, in_dim, spec, name=f"sa{i}")
            self.sa_layers.append(sa)
            in_dim = sa.out_dim
        self.fp_layers: list[FeaturePropagation] = []
        skip_dims = [self.IN_FEATURES] + [sa.out_dim for sa in self.sa_layers[:-1]]
        coarse_dim = self.sa_layers[-1].out_dim
        for i, width in enumerate(cfg.fp_widths):
            skip = skip_dims[len(self.sa_layers) - 1 - i]
            fp = FeaturePropagation(rng, coarse_dim, skip, (width,), name=f"fp{i}")
            self.fp_layers.append(fp)
            coarse_dim = width
        self.seg_fc1 = Linear(rng, coarse_dim, cfg.head_hidden, name="seg.fc1")
        self.seg_fc2 = Linear(rng, cfg.head_hidden, 1, name="seg.fc2")
        self.ctr_fc1 = Linear(rng, coarse_dim, cfg.head_hidden, name="ctr.fc1")
        self.ctr_fc2 = Linear(rng, cfg.head_hidden, cfg.center_out, name="ctr.fc2")

    def parameters(self) -> list[ParamTensor]:
        params = []
        for layer in (*self.sa_layers, *self.fp_layers):
            params.extend(layer.parameters())
        for head in (self.seg_fc1, self.seg_fc2, self.ctr_fc1, self.ctr_fc2):
            params.extend(head.parameters())
        return params

    def forward(self, xyz: np.ndarray, intensity: np.ndarray
                ) -> tuple[ParamTensor, ParamTensor]:
        """Per-point foreground probability (N, 1) and center code (N, 4*bins)."""
        if xyz.shape[0] == 0:
            raise ValueError("stage-1 forward on an empty cloud")
        feats = ParamTensor(np.concatenate([xyz, intensity[:, None]], axis=1))
        levels = [(xyz, feats)]
        for sa in self.sa_layers:
            levels.append(sa(*levels[-1]))
        coarse_xyz, coarse_feat = levels[-1]
        for i, fp in enumerate(self.fp_layers):
            fine_xyz, skip = levels[len(levels) - 2 - i]
            coarse_feat = fp(coarse_xyz, coarse_feat, fine_xyz, skip)
            coarse_xyz = fine_xyz
        fg = self.seg_fc2(self.seg_fc1(coarse_feat).relu()).sigmoid()
        center = self.ctr_fc2(self.ctr_fc1(coarse_feat).relu())
        return fg, center

    def forward_scene(self, cloud: PointCloud, rng: np.random.Generator
                      ) -> tuple[np.ndarray, ParamTensor, ParamTensor]:
        """Resample to the configured size and run; returns (sampled xyzi, fg, center)."""
        idx = resample_points(cloud.xyzi, self.cfg.num_points, rng)
        xyzi = cloud.xyzi[idx]
        fg, center = self.forward(xyzi[:, :3], xyzi[:, 3])
        return xyzi, fg, center

    def split_center(self, center: ParamTensor
                     ) -> tuple[ParamTensor, ParamTensor, ParamTensor, ParamTensor]:
        """Center head output -> (x logits, x residuals, z logits, z residuals)."""
        nb = self.cfg.bin_cfg.num_bins
        return (center[:, :nb], center[:, nb:2 * nb],
                center[:, 2 * nb:3 * nb], center[:, 3 * nb:4 * nb])

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]):
        for p in self.parameters():
            p.data = np.array(arrays[p.name], dtype=np.float64)
