"""Point-network building blocks: shared MLPs, set abstraction, propagation.

Layers own their parameters (ParamTensor leaves) and expose `parameters()`
for the optimizer and checkpointing. Shapes follow the usual point-network
convention: per-point feature matrices of shape (N, C).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pointops import ball_query_group, farthest_point_sample, three_nn_interpolate
from .tensor import ParamTensor, parameter


class ShapeMismatchError(ValueError):
    pass


class Linear:
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int,
                 name: str = "linear"):
        self.name = name
        self.weight = parameter(rng, (in_dim, out_dim), name=f"{name}.weight")
        self.bias = ParamTensor(np.zeros(out_dim), requires_grad=True,
                                name=f"{name}.bias")

    def __call__(self, x: ParamTensor) -> ParamTensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeMismatchError(
                f"{self.name}: input width {x.shape[-1]} != {self.weight.shape[0]}")
        return x @ self.weight + self.bias

    def parameters(self):
        return [self.weight, self.bias]


class SharedMLP:
    """Stack of Linear+ReLU applied identically to every point row."""

    def __init__(self, rng, widths: list[int], name: str = "mlp",
                 final_relu: bool = True):
        self.layers = [Linear(rng, a, b, name=f"{name}.{i}")
                       for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]
        self.final_relu = final_relu

    def __call__(self, x: ParamTensor) -> ParamTensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i != last or self.final_relu:
                x = x.relu()
        return x

    def parameters(self):
        return [p for l in self.layers for p in l.parameters()]


@dataclass(frozen=True)
class SASpec:
    """Set-abstraction level: sample `group_size` centroids, group per scale."""
    group_size: int
    radii: tuple[float, ...]
    caps: tuple[int, ...]
    mlp_widths: tuple[int, ...]  # hidden/out widths, input width is implied

    def __post_init__(self):
        if list(self.radii) != sorted(self.radii):
            raise ValueError("radii must be ascending")
        if len(self.radii) != len(self.caps):
            raise ValueError("one neighbor cap per radius")


class SetAbstraction:
    """Sample (FPS) -> group (ball query, re-centered) -> shared MLP -> max pool.

    Multi-scale specs concatenate the pooled features of each radius.
    """

    def __init__(self, rng, in_dim: int, spec: SASpec, name: str = "sa"):
        self.spec = spec
        self.name = name
        # grouped features are [local dx,dy,dz ++ input features]
        self.mlps = [SharedMLP(rng, [in_dim + 3, *spec.mlp_widths],
                               name=f"{name}.scale{i}")
                     for i in range(len(spec.radii))]
        self.out_dim = spec.mlp_widths[-1] * len(spec.radii)

    def __call__(self, xyz: np.ndarray, features: ParamTensor
                 ) -> tuple[np.ndarray, ParamTensor]:
        if features.shape[0] != xyz.shape[0]:
            raise ShapeMismatchError(
                f"{self.name}: {features.shape[0]} features vs {xyz.shape[0]} points")
        centroid_idx = farthest_point_sample(xyz, self.spec.group_size)
        new_xyz = xyz[centroid_idx]
        pooled = []
        for mlp, radius, cap in zip(self.mlps, self.spec.radii, self.spec.caps):
            group_idx = ball_query_group(xyz, new_xyz, radius, cap)  # (C, K)
            local = xyz[group_idx] - new_xyz[:, None, :]             # (C, K, 3)
            grouped = features.gather_rows(group_idx)                # (C, K, F)
            block = ParamTensor.concat([ParamTensor(local), grouped], axis=2)
            out = mlp(block)                                         # (C, K, W)
            pooled.append(out.max(axis=1))                           # (C, W)
        return new_xyz, ParamTensor.concat(pooled, axis=1)

    def parameters(self):
        return [p for m in self.mlps for p in m.parameters()]


class FeaturePropagation:
    """Upsample coarse features to fine points by 3-NN interpolation + MLP."""

    def __init__(self, rng, coarse_dim: int, skip_dim: int,
                 mlp_widths: tuple[int, ...], name: str = "fp"):
        self.name = name
        self.mlp = SharedMLP(rng, [coarse_dim + skip_dim, *mlp_widths], name=name)
        self.out_dim = mlp_widths[-1]

    def __call__(self, coarse_xyz: np.ndarray, coarse_feat: ParamTensor,
                 fine_xyz: np.ndarray, skip_feat: ParamTensor | None) -> ParamTensor:
        idx, w = three_nn_interpolate(coarse_xyz, fine_xyz)
        gathered = coarse_feat.gather_rows(idx)             # (F, m, C)
        interp = (gathered * ParamTensor(w[:, :, None])).sum(axis=1)
        if skip_feat is not None:
            interp = ParamTensor.concat([interp, skip_feat], axis=1)
        return self.mlp(interp)

    def parameters(self):
        return self.mlp.parameters()
