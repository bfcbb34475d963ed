"""Loading KITTI-format directory trees into in-memory training samples."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .detector.augment import SceneSample
from .geometry import Cuboid
from .kitti_io import (parse_calib, parse_labels, parse_velodyne, read_clicks,
                       to_cuboid, transform_to_internal)


def scene_ids(root: str | Path) -> list[str]:
    velo = Path(root) / "velodyne"
    return sorted(p.stem for p in velo.glob("*.bin"))


def load_scene(root: str | Path, stem: str, clicks_dir: str | Path | None = None,
               with_labels: bool = True, cls: str = "Car") -> SceneSample:
    root = Path(root)
    calib = parse_calib((root / "calib" / f"{stem}.txt").read_text())
    cloud = parse_velodyne((root / "velodyne" / f"{stem}.bin").read_bytes())
    cloud = transform_to_internal(cloud, calib)
    clicks = []
    clicks_path = Path(clicks_dir or root / "clicks") / f"{stem}.txt"
    if clicks_path.exists():
        clicks = [c for c in read_clicks(clicks_path.read_text()) if c.cls == cls]
    cuboids: list[Cuboid] = []
    label_path = root / "label_2" / f"{stem}.txt"
    if with_labels and label_path.exists():
        cuboids = [to_cuboid(r) for r in parse_labels(label_path.read_text())
                   if r.cls == cls]
    return SceneSample(cloud, clicks, cuboids)


def load_dataset(root: str | Path, clicks_dir: str | Path | None = None,
                 with_labels: bool = True, cls: str = "Car",
                 limit: int | None = None,
                 precise_fraction: float | None = None,
                 seed: int = 0) -> list[SceneSample]:
    """Load scenes; optionally keep precise cuboids on only a random subset of
    instances (the weak-supervision regime)."""
    stems = scene_ids(root)
    if limit is not None:
        stems = stems[:limit]
    samples = [load_scene(root, s, clicks_dir, with_labels, cls) for s in stems]
    if precise_fraction is not None:
        rng = np.random.default_rng(seed)
        all_refs = [(i, j) for i, s in enumerate(samples)
                    for j in range(len(s.cuboids))]
        n_keep = max(int(round(precise_fraction * len(all_refs))), 1)
        kept_refs = {all_refs[k] for k in
                     rng.permutation(len(all_refs))[:n_keep].tolist()}
        for i, s in enumerate(samples):
            s.cuboids = [c for j, c in enumerate(s.cuboids) if (i, j) in kept_refs]
    return samples
