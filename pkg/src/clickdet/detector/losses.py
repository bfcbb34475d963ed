"""Training losses: soft focal segmentation, bin+residual regression,
cuboid parameter loss, and IoU-supervised confidence."""

from __future__ import annotations

import math

import numpy as np

from ..engine.tensor import ParamTensor, log_softmax
from ..geometry import Cuboid, iou_3d
from .config import LossConfig

LOG_CLAMP = 1e-12


def smooth_l1(diff: ParamTensor, transition: float = 1.0) -> ParamTensor:
    """Elementwise smooth-l1: quadratic below `transition`, linear above."""
    a = diff.abs()
    mask = ParamTensor((a.data < transition).astype(np.float64))
    quad = (a * a) * (0.5 / transition)
    lin = a - 0.5 * transition
    return mask * quad + (1.0 - mask) * lin


def seg_loss(pred: ParamTensor, target: np.ndarray,
             cfg: LossConfig | None = None) -> ParamTensor:
    """Soft focal loss between predicted and pseudo foreground probabilities.

    pred and target are per-point probabilities in [0, 1]; the loss is the
    mean of -alpha * (1 - q)^gamma * log(q) with q the agreement
    pred*target + (1-pred)*(1-target).
    """
    cfg = cfg or LossConfig()
    t = ParamTensor(np.asarray(target, dtype=np.float64))
    q = pred * t + (1.0 - pred) * (1.0 - t)
    focal = (1.0 - q) ** cfg.focal_gamma
    return (cfg.focal_alpha * focal * (-q.clamp_min(LOG_CLAMP).log())).mean()


def cross_entropy(logits: ParamTensor, target_bins: np.ndarray) -> ParamTensor:
    """Mean CE over rows; logits (N, B), integer targets (N,)."""
    logp = log_softmax(logits, axis=-1)
    rows = np.arange(logits.shape[0])
    picked = logp[rows, np.asarray(target_bins, dtype=np.intp)]
    return -picked.mean()


def bin_loss(bin_logits: ParamTensor, residual_pred: ParamTensor,
             target_bins: np.ndarray, target_residuals: np.ndarray,
             cfg: LossConfig | None = None) -> ParamTensor:
    """Bin classification CE plus smooth-l1 on the target bin's residual.

    Shapes: (N, B) logits, (N, B) per-bin residual predictions, (N,) targets.
    """
    cfg = cfg or LossConfig()
    rows = np.arange(bin_logits.shape[0])
    tb = np.asarray(target_bins, dtype=np.intp)
    ce = cross_entropy(bin_logits, tb)
    picked = residual_pred[rows, tb]
    reg = smooth_l1(picked - ParamTensor(np.asarray(target_residuals)),
                    cfg.smooth_l1_transition).mean()
    return ce + reg


def encode_theta(theta: float, num_bins: int = 12) -> tuple[int, float]:
    """Yaw to (bin, residual): bins tile [-pi, pi), residual in half-bin units."""
    width = 2.0 * math.pi / num_bins
    shifted = (theta + math.pi) % (2.0 * math.pi)
    b = min(int(shifted // width), num_bins - 1)
    r = (shifted - (b * width + width / 2.0)) / (width / 2.0)
    return b, r


def decode_theta(b: int, r: float, num_bins: int = 12) -> float:
    width = 2.0 * math.pi / num_bins
    return (b * width + width / 2.0 + r * (width / 2.0)) - math.pi


class BoxHeadOutput:
    """View over the 30-wide box head: theta bins/residuals + 6 scalars."""

    def __init__(self, raw: ParamTensor, theta_bins: int = 12):
        self.theta_bins = theta_bins
        self.theta_logits = raw[:, :theta_bins]
        self.theta_residuals = raw[:, theta_bins:2 * theta_bins]
        self.scalars = raw[:, 2 * theta_bins:]  # x, y, z, h, w, l offsets

    def decode(self, row: int, anchor: tuple[float, float, float]) -> Cuboid:
        """Build a canonical-frame cuboid from one row of head output."""
        b = int(np.argmax(self.theta_logits.data[row]))
        r = float(self.theta_residuals.data[row, b])
        theta = decode_theta(b, r, self.theta_bins)
        x, y, z, dh, dw, dl = self.scalars.data[row]
        h0, w0, l0 = anchor
        return Cuboid(x, y, z,
                      max(h0 + dh, 0.05), max(w0 + dw, 0.05), max(l0 + dl, 0.05),
                      theta)


def box_loss(out: BoxHeadOutput, targets: list[Cuboid],
             anchor: tuple[float, float, float],
             cfg: LossConfig | None = None) -> ParamTensor:
    """Cuboid regression loss against canonical-frame target boxes."""
    cfg = cfg or LossConfig()
    n = len(targets)
    tb = np.empty(n, dtype=np.intp)
    tr = np.empty(n)
    scal = np.empty((n, 6))
    h0, w0, l0 = anchor
    for i, t in enumerate(targets):
        tb[i], tr[i] = encode_theta(t.theta, out.theta_bins)
        scal[i] = (t.cx, t.cy, t.cz, t.h - h0, t.w - w0, t.l - l0)
    theta_term = bin_loss(out.theta_logits, out.theta_residuals, tb, tr, cfg)
    reg = smooth_l1(out.scalars - ParamTensor(scal), cfg.smooth_l1_transition)
    return theta_term + reg.sum(axis=1).mean()


def confidence_target(cuboid: Cuboid, gts: list[Cuboid]) -> float:
    if not gts:
        return 0.0
    return max(iou_3d(cuboid, g) for g in gts)


def confidence_loss(pred: ParamTensor, cuboids: list[Cuboid],
                    gts_per_row: list[list[Cuboid]],
                    cfg: LossConfig | None = None) -> ParamTensor:
    """Smooth-l1 between predicted confidence and best 3D IoU to groundtruth."""
    cfg = cfg or LossConfig()
    target = np.array([confidence_target(c, g)
                       for c, g in zip(cuboids, gts_per_row)])
    return smooth_l1(pred.reshape(-1) - ParamTensor(target),
                     cfg.smooth_l1_transition).mean()
