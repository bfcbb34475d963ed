"""Deterministic synthetic lidar scenes with exact groundtruth.

Scenes live in the internal frame (y down, sensor at the origin) and are
emitted through the KITTI writers so downstream code has a single ingestion
path. Vehicle points are sampled on the sensor-facing box faces; optional
shadowing removes returns occluded in BEV azimuth by a nearer vehicle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Cuboid, PointCloud, bev_iou, rotation_about_vertical
from .kitti_io import (CalibRecord, ClickAnnotation, internal_to_velodyne,
                       write_calib, write_clicks, write_labels, write_velodyne)

GROUND_Y = 1.7  # sensor height above ground; y points down


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_scenes: int = 10
    vehicles_min: int = 1
    vehicles_max: int = 4
    mean_size: tuple[float, float, float] = (1.53, 1.63, 3.88)  # h, w, l
    size_jitter: float = 0.08
    x_range: tuple[float, float] = (-16.0, 16.0)
    z_range: tuple[float, float] = (8.0, 45.0)
    points_per_m2: float = 60.0
    ground_points: int = 2500
    clutter_clusters: int = 3
    shadowing: bool = True
    click_sigma_x: float = 0.25
    click_sigma_z: float = 0.75

    def __post_init__(self):
        if self.points_per_m2 <= 0:
            raise ValueError("points_per_m2 must be positive")
        if self.x_range[0] >= self.x_range[1] or self.z_range[0] >= self.z_range[1]:
            raise ValueError("degenerate placement range")


def _sample_faces(cub: Cuboid, density: float, rng: np.random.Generator
                  ) -> np.ndarray:
    """Points on the sensor-facing side faces and the roof of a box."""
    rot = rotation_about_vertical(cub.theta)
    ctr = np.array([cub.cx, cub.cy, cub.cz])
    # local axes: x = width, y = height (down), z = length
    faces = [
        (np.array([cub.w / 2, 0, 0]), (cub.l, cub.h), "zy"),   # +x side
        (np.array([-cub.w / 2, 0, 0]), (cub.l, cub.h), "zy"),  # -x side
        (np.array([0, 0, cub.l / 2]), (cub.w, cub.h), "xy"),   # +z end
        (np.array([0, 0, -cub.l / 2]), (cub.w, cub.h), "xy"),  # -z end
        (np.array([0, -cub.h / 2, 0]), (cub.w, cub.l), "xz"),  # roof
    ]
    pts = []
    for offset, (da, db), plane in faces:
        normal_w = rot @ (offset / np.linalg.norm(offset))
        center_w = rot @ offset + ctr
        # keep faces whose outward normal points back toward the sensor
        if np.dot(normal_w, center_w) >= 0:
            continue
        n = max(int(density * da * db), 3)
        a = rng.uniform(-da / 2, da / 2, size=n)
        b = rng.uniform(-db / 2, db / 2, size=n)
        local = np.tile(offset, (n, 1))
        ia, ib = {"zy": (2, 1), "xy": (0, 1), "xz": (0, 2)}[plane]
        local[:, ia] += a
        local[:, ib] += b
        pts.append(local @ rot.T + ctr)
    if not pts:
        return np.zeros((0, 3))
    return np.vstack(pts)


def _shadow_intervals(cuboids: list[Cuboid]) -> list[tuple[float, float, float]]:
    """(azimuth lo, azimuth hi, blocker max range) per box footprint."""
    out = []
    for c in cuboids:
        corners = c.bev_corners()
        az = np.arctan2(corners[:, 0], corners[:, 1])
        rng_max = float(np.max(np.hypot(corners[:, 0], corners[:, 1])))
        lo, hi = float(az.min()), float(az.max())
        if hi - lo > math.pi:  # interval straddles the +/-pi seam; skip (rare)
            continue
        out.append((lo, hi, rng_max))
    return out


def _apply_shadowing(pts: np.ndarray, blockers: list[tuple[float, float, float]],
                     owner_range: float) -> np.ndarray:
    if not blockers or pts.shape[0] == 0:
        return pts
    az = np.arctan2(pts[:, 0], pts[:, 2])
    rng_ = np.hypot(pts[:, 0], pts[:, 2])
    keep = np.ones(pts.shape[0], dtype=bool)
    for lo, hi, blocker_range in blockers:
        if blocker_range >= owner_range:
            continue
        keep &= ~((az >= lo) & (az <= hi) & (rng_ > blocker_range))
    return pts[keep]


def generate_scene(cfg: SynthConfig, index: int
                   ) -> tuple[PointCloud, list[Cuboid], np.ndarray]:
    """Deterministic scene: (cloud, groundtruth cuboids, per-GT point counts)."""
    rng = np.random.default_rng([cfg.seed, index])
    n_veh = int(rng.integers(cfg.vehicles_min, cfg.vehicles_max + 1))
    cuboids: list[Cuboid] = []
    attempts = 0
    while len(cuboids) < n_veh and attempts < 200:
        attempts += 1
        h0, w0, l0 = cfg.mean_size
        h = max(h0 * (1 + rng.normal(0, cfg.size_jitter)), 0.5)
        w = max(w0 * (1 + rng.normal(0, cfg.size_jitter)), 0.5)
        l = max(l0 * (1 + rng.normal(0, cfg.size_jitter)), 0.5)
        cand = Cuboid(rng.uniform(*cfg.x_range), GROUND_Y - h / 2.0,
                      rng.uniform(*cfg.z_range), h, w, l,
                      rng.uniform(-math.pi, math.pi))
        # enforce clear separation so footprints never overlap
        if all(math.hypot(cand.cx - c.cx, cand.cz - c.cz) > 6.0 for c in cuboids) \
                and all(bev_iou(cand, c) == 0.0 for c in cuboids):
            cuboids.append(cand)

    blockers = _shadow_intervals(cuboids) if cfg.shadowing else []
    parts = []
    counts = np.zeros(len(cuboids), dtype=int)
    for i, cub in enumerate(cuboids):
        pts = _sample_faces(cub, cfg.points_per_m2, rng)
        own_range = math.hypot(cub.cx, cub.cz)
        others = [b for j, b in enumerate(blockers) if j != i]
        pts = _apply_shadowing(pts, others, own_range)
        if pts.shape[0] == 0:  # always keep at least one surface return
            pts = np.array([[cub.cx, cub.cy, cub.cz]])
        counts[i] = pts.shape[0]
        parts.append(pts)

    gx = rng.uniform(cfg.x_range[0] - 4, cfg.x_range[1] + 4, cfg.ground_points)
    gz = rng.uniform(max(cfg.z_range[0] - 4, 1.0), cfg.z_range[1] + 4,
                     cfg.ground_points)
    ground = np.column_stack([gx, np.full(cfg.ground_points, GROUND_Y), gz])
    parts.append(ground)

    for _ in range(cfg.clutter_clusters):
        cx = rng.uniform(*cfg.x_range)
        cz = rng.uniform(*cfg.z_range)
        if any(math.hypot(cx - c.cx, cz - c.cz) < 6.0 for c in cuboids):
            continue
        n = int(rng.integers(20, 80))
        pts = np.column_stack([
            rng.normal(cx, 0.3, n),
            GROUND_Y - rng.uniform(0.0, 2.5, n),
            rng.normal(cz, 0.3, n),
        ])
        parts.append(pts)

    xyz = np.vstack(parts)
    intensity = rng.uniform(0.1, 0.9, xyz.shape[0])
    return PointCloud(np.column_stack([xyz, intensity])), cuboids, counts


def generate_clicks(cuboids: list[Cuboid], cfg: SynthConfig,
                    rng: np.random.Generator, cls: str = "Car"
                    ) -> list[ClickAnnotation]:
    """One noisy click per groundtruth, Gaussian in x and z."""
    return [ClickAnnotation(cls,
                            c.cx + rng.normal(0.0, cfg.click_sigma_x),
                            c.cz + rng.normal(0.0, cfg.click_sigma_z))
            for c in cuboids]


def write_dataset(cfg: SynthConfig, out_dir: str | Path) -> None:
    """KITTI-format tree: velodyne/, label_2/, calib/, clicks/, counts/."""
    out = Path(out_dir)
    for sub in ("velodyne", "label_2", "calib", "clicks", "counts"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    calib = CalibRecord.identity()
    for i in range(cfg.num_scenes):
        cloud, cuboids, counts = generate_scene(cfg, i)
        rng = np.random.default_rng([cfg.seed, i, 7])
        clicks = generate_clicks(cuboids, cfg, rng)
        stem = f"{i:06d}"
        velo = internal_to_velodyne(cloud, calib)
        (out / "velodyne" / f"{stem}.bin").write_bytes(write_velodyne(velo))
        (out / "label_2" / f"{stem}.txt").write_text(write_labels(cuboids, calib))
        (out / "calib" / f"{stem}.txt").write_text(write_calib(calib))
        (out / "clicks" / f"{stem}.txt").write_text(write_clicks(clicks))
        (out / "counts" / f"{stem}.txt").write_text(
            "".join(f"{c}\n" for c in counts))
