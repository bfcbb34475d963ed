"""Training-time augmentation for scenes (stage 1) and proposal crops (stage 2)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Cuboid, PointCloud, rotation_about_vertical, wrap_angle
from ..kitti_io import ClickAnnotation


@dataclass
class SceneSample:
    cloud: PointCloud
    clicks: list[ClickAnnotation]
    cuboids: list[Cuboid]  # precise instances; may be empty for weak-only scenes


def _flip_cuboid(c: Cuboid) -> Cuboid:
    return Cuboid(-c.cx, c.cy, c.cz, c.h, c.w, c.l, -c.theta)


def _rotate_cuboid(c: Cuboid, phi: float) -> Cuboid:
    rot = rotation_about_vertical(phi)
    ctr = rot @ np.array([c.cx, c.cy, c.cz])
    return Cuboid(ctr[0], ctr[1], ctr[2], c.h, c.w, c.l, c.theta + phi)


def extract_instance(sample: SceneSample, click: ClickAnnotation,
                     radius: float = 4.0) -> np.ndarray:
    """Points of a labeled center's cylinder, re-centered horizontally."""
    dx = sample.cloud.xyzi[:, 0] - click.x_o
    dz = sample.cloud.xyzi[:, 2] - click.z_o
    rows = np.flatnonzero(dx * dx + dz * dz <= radius * radius)
    out = sample.cloud.xyzi[rows].copy()
    out[:, 0] -= click.x_o
    out[:, 2] -= click.z_o
    return out


def augment_scene(sample: SceneSample, rng: np.random.Generator,
                  insert_pool: list[tuple[np.ndarray, str]] | None = None,
                  drop_radius: float = 4.0) -> SceneSample:
    """Mirror flip, global scale/yaw, instance insertion, cylinder point-drop."""
    xyzi = sample.cloud.xyzi.copy()
    clicks = list(sample.clicks)
    cuboids = list(sample.cuboids)

    if insert_pool and rng.random() < 0.5:
        inst, cls = insert_pool[rng.integers(len(insert_pool))]
        for _ in range(10):
            nx = rng.uniform(-18.0, 18.0)
            nz = rng.uniform(8.0, 45.0)
            if all((nx - c.x_o) ** 2 + (nz - c.z_o) ** 2 > (2 * drop_radius) ** 2
                   for c in clicks):
                placed = inst.copy()
                placed[:, 0] += nx
                placed[:, 2] += nz
                xyzi = np.vstack([xyzi, placed])
                clicks.append(ClickAnnotation(cls, nx, nz))
                break

    if rng.random() < 0.5:
        xyzi[:, 0] = -xyzi[:, 0]
        clicks = [ClickAnnotation(c.cls, -c.x_o, c.z_o) for c in clicks]
        cuboids = [_flip_cuboid(c) for c in cuboids]

    scale = rng.uniform(0.95, 1.05)
    xyzi[:, :3] *= scale
    clicks = [ClickAnnotation(c.cls, c.x_o * scale, c.z_o * scale) for c in clicks]
    cuboids = [Cuboid(c.cx * scale, c.cy * scale, c.cz * scale,
                      c.h * scale, c.w * scale, c.l * scale, c.theta)
               for c in cuboids]

    phi = rng.uniform(-math.pi / 18.0, math.pi / 18.0)
    rot = rotation_about_vertical(phi)
    xyzi[:, :3] = xyzi[:, :3] @ rot.T
    new_clicks = []
    for c in clicks:
        v = rot @ np.array([c.x_o, 0.0, c.z_o])
        new_clicks.append(ClickAnnotation(c.cls, v[0], v[2]))
    clicks = new_clicks
    cuboids = [_rotate_cuboid(c, phi) for c in cuboids]

    # random sparsification inside labeled cylinders, for distant-vehicle robustness
    for c in clicks:
        if rng.random() >= 0.3:
            continue
        dx = xyzi[:, 0] - c.x_o
        dz = xyzi[:, 2] - c.z_o
        inside = np.flatnonzero(dx * dx + dz * dz <= drop_radius ** 2)
        if inside.size < 20:
            continue
        drop_frac = rng.uniform(0.1, 0.7)
        drop = rng.choice(inside, size=int(inside.size * drop_frac), replace=False)
        keep = np.setdiff1d(np.arange(xyzi.shape[0]), drop)
        xyzi = xyzi[keep]

    return SceneSample(PointCloud(xyzi), clicks, cuboids)


def apply_block_transform(block: np.ndarray, gt: Cuboid, flip: bool = False,
                          scale: float = 1.0, yaw: float = 0.0,
                          shift: np.ndarray | None = None
                          ) -> tuple[np.ndarray, Cuboid]:
    """Rigid/similarity transform of a canonical crop and its groundtruth.

    Default arguments are a no-op; augmentation draws them at random.
    """
    out = block.copy()
    if flip:
        out[:, 0] = -out[:, 0]
        gt = _flip_cuboid(gt)
    if scale != 1.0:
        out[:, :3] *= scale
        gt = Cuboid(gt.cx * scale, gt.cy * scale, gt.cz * scale,
                    gt.h * scale, gt.w * scale, gt.l * scale, gt.theta)
    if yaw != 0.0:
        rot = rotation_about_vertical(yaw)
        out[:, :3] = out[:, :3] @ rot.T
        gt = _rotate_cuboid(gt, yaw)
    if shift is not None and np.any(shift):
        out[:, :3] += shift
        gt = Cuboid(gt.cx + shift[0], gt.cy + shift[1], gt.cz + shift[2],
                    gt.h, gt.w, gt.l, gt.theta)
    return out, gt


def _repad(block: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    if block.shape[0] >= n:
        return block[:n]
    extra = rng.integers(block.shape[0], size=n - block.shape[0])
    return np.vstack([block, block[extra]])


def augment_proposal(block: np.ndarray, gt: Cuboid, rng: np.random.Generator,
                     min_points: int = 32) -> tuple[np.ndarray, Cuboid]:
    """Flip, scale, yaw, center jitter, label flips, sector omission, point drop.

    `block` is a canonical (P, 5) crop; the groundtruth cuboid is transformed
    consistently. The output keeps the input's row count.
    """
    n = block.shape[0]
    # center jitter models re-placing the proposal axis; sigma^2 = 0.1 per axis
    out, gt = apply_block_transform(
        block, gt,
        flip=bool(rng.random() < 0.5),
        scale=rng.uniform(0.8, 1.2),
        yaw=rng.uniform(-math.pi / 2.0, math.pi / 2.0),
        shift=rng.normal(0.0, math.sqrt(0.1), size=3),
    )

    flip_mask = rng.random(n) < 0.05
    out[flip_mask, 4] = 1.0 - out[flip_mask, 4]

    if rng.random() < 0.3:
        start = rng.uniform(0.0, 2.0 * math.pi)
        width = rng.uniform(math.pi / 2.0, 3.0 * math.pi / 2.0)
        ang = np.arctan2(out[:, 0] - gt.cx, out[:, 2] - gt.cz)
        rel = (ang - start) % (2.0 * math.pi)
        keep = out[rel > width]
        if keep.shape[0] >= min_points:
            out = _repad(keep, n, rng)

    if rng.random() < 0.3 and out.shape[0] > min_points:
        target = int(rng.integers(min_points, out.shape[0] + 1))
        keep_rows = rng.choice(out.shape[0], size=target, replace=False)
        out = _repad(out[np.sort(keep_rows)], n, rng)

    return out, Cuboid(gt.cx, gt.cy, gt.cz, gt.h, gt.w, gt.l, wrap_angle(gt.theta))
