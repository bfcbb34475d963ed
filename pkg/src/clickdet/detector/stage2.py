"""Stage-2 networks: cuboid generation / refinement over cropped proposals."""

from __future__ import annotations

import numpy as np

from ..engine.layers import Linear, SetAbstraction
from ..engine.tensor import ParamTensor
from .config import Stage2Config
from .losses import BoxHeadOutput


class Stage2Net:
    """Single-scale set-abstraction trunk ending in one global feature,
    with a cuboid-parameter head and an optional confidence head."""

    def __init__(self, cfg: Stage2Config, rng: np.random.Generator,
                 with_confidence: bool, name: str = "s2"):
        self.cfg = cfg
        self.name = name
        self.with_confidence = with_confidence
        self.sa_layers: list[SetAbstraction] = []
        in_dim = cfg.in_features
        for i, spec in enumerate(cfg.sa_specs):
            sa = SetAbstraction(rng, in_dim, spec, name=f"{name}.sa{i}")
            self.sa_layers.append(sa)
            in_dim = sa.out_dim
        box_out = 2 * cfg.theta_bins + 6
        self.box_fc1 = Linear(rng, in_dim, cfg.head_hidden, name=f"{name}.box.fc1")
        self.box_fc2 = Linear(rng, cfg.head_hidden, box_out, name=f"{name}.box.fc2")
        if with_confidence:
            self.conf_fc1 = Linear(rng, in_dim, cfg.head_hidden, name=f"{name}.conf.fc1")
            self.conf_fc2 = Linear(rng, cfg.head_hidden, 1, name=f"{name}.conf.fc2")

    def parameters(self) -> list[ParamTensor]:
        params = []
        for sa in self.sa_layers:
            params.extend(sa.parameters())
        params.extend(self.box_fc1.parameters())
        params.extend(self.box_fc2.parameters())
        if self.with_confidence:
            params.extend(self.conf_fc1.parameters())
            params.extend(self.conf_fc2.parameters())
        return params

    def trunk(self, block: np.ndarray) -> ParamTensor:
        """(P, 5) canonical feature block -> (1, trunk_width) global feature."""
        if block.shape[1] != self.cfg.in_features:
            raise ValueError(
                f"{self.name}: expected {self.cfg.in_features} feature channels, "
                f"got {block.shape[1]}")
        xyz = block[:, :3]
        feat = ParamTensor(block)
        for sa in self.sa_layers:
            xyz, feat = sa(xyz, feat)
        return feat

    def forward(self, block: np.ndarray) -> tuple[BoxHeadOutput, ParamTensor | None]:
        feat = self.trunk(block)
        box = BoxHeadOutput(self.box_fc2(self.box_fc1(feat).relu()),
                            self.cfg.theta_bins)
        conf = None
        if self.with_confidence:
            conf = self.conf_fc2(self.conf_fc1(feat).relu()).sigmoid()
        return box, conf

    def forward_batch(self, blocks: list[np.ndarray]
                      ) -> tuple[BoxHeadOutput, ParamTensor | None]:
        """Run several equally-sized blocks and stack the head outputs."""
        feats = [self.trunk(b) for b in blocks]
        feat = ParamTensor.concat(feats, axis=0)
        box = BoxHeadOutput(self.box_fc2(self.box_fc1(feat).relu()),
                            self.cfg.theta_bins)
        conf = None
        if self.with_confidence:
            conf = self.conf_fc2(self.conf_fc1(feat).relu()).sigmoid()
        return box, conf

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]):
        for p in self.parameters():
            p.data = np.array(arrays[p.name], dtype=np.float64)
