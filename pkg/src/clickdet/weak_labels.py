"""Click annotations to trainable signals.

Pseudo foreground fields around clicked centers, support-point selection,
and the bin + residual encoding of the horizontal center offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud
from .kitti_io import ClickAnnotation


@dataclass(frozen=True)
class PseudoLabelConfig:
    near_radius: float = 0.7
    gaussian_mean: float = 0.7
    gaussian_var: float = 1.5
    y_weight: float = 0.5
    shape: str = "gaussian"      # gaussian (vehicles) or pillar (pedestrians)
    pillar_radius: float = 0.4

    def __post_init__(self):
        if self.gaussian_var <= 0:
            raise ValueError("gaussian_var must be positive")
        if self.near_radius < 0:
            raise ValueError("near_radius must be non-negative")
        if self.shape not in ("gaussian", "pillar"):
            raise ValueError(f"unknown pseudo-label shape {self.shape!r}")


@dataclass(frozen=True)
class BinEncoderConfig:
    half_range: float = 4.0
    bin_size: float = 0.8
    num_bins: int = 10

    def __post_init__(self):
        if not math.isclose(self.num_bins * self.bin_size, 2 * self.half_range):
            raise ValueError("num_bins * bin_size must equal the full search range")

    @property
    def residual_scale(self) -> float:
        return self.bin_size / 2.0


@dataclass(frozen=True)
class CenterTarget:
    bin_x: int
    bin_z: int
    res_x: float
    res_z: float


def weighted_distance(dx: np.ndarray, dy: np.ndarray, dz: np.ndarray,
                      y_weight: float = 0.5) -> np.ndarray:
    """Anisotropic distance with a down-weighted vertical term."""
    return np.sqrt(dx * dx + y_weight * dy * dy + dz * dz)


def foreground_from_distance(d: np.ndarray, cfg: PseudoLabelConfig) -> np.ndarray:
    """Soft foreground value as a function of weighted distance to a center.

    1 inside the near radius; beyond it a Gaussian falloff normalized so the
    two branches agree at the boundary.
    """
    d = np.asarray(d, dtype=np.float64)
    far = np.exp(-((d - cfg.gaussian_mean) ** 2) / (2.0 * cfg.gaussian_var))
    return np.where(d <= cfg.near_radius, 1.0, far)


def pseudo_foreground_field(cloud: PointCloud, centers: list[ClickAnnotation],
                            cfg: PseudoLabelConfig | None = None) -> np.ndarray:
    """Per-point pseudo foreground values: max over centers of the falloff."""
    cfg = cfg or PseudoLabelConfig()
    n = len(cloud)
    if not centers:
        return np.zeros(n)
    out = np.zeros(n)
    for c in centers:
        if cfg.shape == "pillar":
            dx = cloud.xyzi[:, 0] - c.x_o
            dz = cloud.xyzi[:, 2] - c.z_o
            f = (dx * dx + dz * dz <= cfg.pillar_radius ** 2).astype(np.float64)
        else:
            d = weighted_distance(cloud.xyzi[:, 0] - c.x_o,
                                  cloud.xyzi[:, 1] - c.y_o,
                                  cloud.xyzi[:, 2] - c.z_o, cfg.y_weight)
            f = foreground_from_distance(d, cfg)
        np.maximum(out, f, out=out)
    return out


def pseudo_foreground(px: float, py: float, pz: float,
                      centers: list[ClickAnnotation],
                      cfg: PseudoLabelConfig | None = None) -> float:
    """Scalar form of `pseudo_foreground_field` for a single point."""
    cloud = PointCloud(np.array([[px, py, pz, 0.0]]))
    return float(pseudo_foreground_field(cloud, centers, cfg)[0])


def select_support_points(cloud: PointCloud, center: ClickAnnotation,
                          fg: np.ndarray, max_distance: float = 4.0,
                          min_fg: float = 0.1,
                          cfg: PseudoLabelConfig | None = None) -> np.ndarray:
    """Indices of points close enough to the click to vote for its center."""
    cfg = cfg or PseudoLabelConfig()
    d = weighted_distance(cloud.xyzi[:, 0] - center.x_o,
                          cloud.xyzi[:, 1] - center.y_o,
                          cloud.xyzi[:, 2] - center.z_o, cfg.y_weight)
    return np.flatnonzero((d <= max_distance) & (np.asarray(fg) >= min_fg))


def encode_offset(offset: float, cfg: BinEncoderConfig) -> tuple[int, float]:
    """One axis of the bin + residual code for (point - center) offsets.

    Offsets outside [-half_range, half_range] are clamped to the range edge.
    """
    shifted = offset + cfg.half_range
    shifted = min(max(shifted, 0.0), 2 * cfg.half_range)
    # epsilon guard so exact bin edges land in the upper bin as in real arithmetic
    b = min(int(math.floor(shifted / cfg.bin_size + 1e-9)), cfg.num_bins - 1)
    r = (shifted - (b * cfg.bin_size + cfg.bin_size / 2.0)) / cfg.residual_scale
    return b, r


def decode_offset(b: int, r: float, cfg: BinEncoderConfig) -> float:
    return (b * cfg.bin_size + cfg.bin_size / 2.0 + r * cfg.residual_scale) - cfg.half_range


def encode_center(px: float, pz: float, o: ClickAnnotation,
                  cfg: BinEncoderConfig | None = None) -> CenterTarget:
    cfg = cfg or BinEncoderConfig()
    bx, rx = encode_offset(px - o.x_o, cfg)
    bz, rz = encode_offset(pz - o.z_o, cfg)
    return CenterTarget(bx, bz, rx, rz)


def decode_center(px: float, pz: float, t: CenterTarget,
                  cfg: BinEncoderConfig | None = None) -> tuple[float, float]:
    """Recover the center location a support point voted for."""
    cfg = cfg or BinEncoderConfig()
    return (px - decode_offset(t.bin_x, t.res_x, cfg),
            pz - decode_offset(t.bin_z, t.res_z, cfg))


def encode_center_field(xz: np.ndarray, o: ClickAnnotation,
                        cfg: BinEncoderConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized codec: (N, 2) point xz to (N, 2) int bins and (N, 2) residuals."""
    cfg = cfg or BinEncoderConfig()
    shifted = xz - np.array([o.x_o, o.z_o]) + cfg.half_range
    shifted = np.clip(shifted, 0.0, 2 * cfg.half_range)
    b = np.minimum(np.floor(shifted / cfg.bin_size + 1e-9).astype(np.int64),
                   cfg.num_bins - 1)
    r = (shifted - (b * cfg.bin_size + cfg.bin_size / 2.0)) / cfg.residual_scale
    return b, r


def decode_center_field(xz: np.ndarray, bins: np.ndarray, residuals: np.ndarray,
                        cfg: BinEncoderConfig | None = None) -> np.ndarray:
    """Vectorized inverse of `encode_center_field`: per-point voted centers."""
    cfg = cfg or BinEncoderConfig()
    offset = bins * cfg.bin_size + cfg.bin_size / 2.0 + residuals * cfg.residual_scale
    return xz - (offset - cfg.half_range)
