"""KITTI-format ingestion and export, plus the click-annotation text format.

Velodyne scans are raw little-endian float32 quadruples (x, y, z, intensity).
Label and calib files are whitespace-delimited text in the standard layout.
Click annotations use this repo's own one-line-per-object format::

    <class> <x_o> <z_o>

with coordinates in meters on the internal BEV (x, z) plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Cuboid, PointCloud

KNOWN_CLASSES = {
    "Car", "Van", "Truck", "Pedestrian", "Person_sitting", "Cyclist",
    "Tram", "Misc", "DontCare",
}


class MalformedInputError(ValueError):
    """Raised when a KITTI or clicks file does not match its format."""


@dataclass(frozen=True)
class LabelRecord:
    cls: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: tuple[float, float, float, float]
    h: float
    w: float
    l: float
    x: float
    y: float  # bottom-face center, rectified camera frame
    z: float
    rotation_y: float
    score: float | None = None


@dataclass(frozen=True)
class CalibRecord:
    velo_to_cam: np.ndarray  # 3x4
    rect: np.ndarray         # 3x3
    proj: np.ndarray         # 3x4 (left color camera)

    def __post_init__(self):
        vr = self.velo_to_cam[:, :3]
        for block in (vr, self.rect):
            if not np.allclose(block @ block.T, np.eye(3), atol=1e-3):
                raise MalformedInputError("calib rotation block not orthonormal")

    @classmethod
    def identity(cls) -> "CalibRecord":
        # Nominal KITTI axis permutation: velodyne (x fwd, y left, z up)
        # to camera (x right, y down, z fwd), zero translation.
        v2c = np.array([
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ])
        proj = np.array([
            [721.5377, 0.0, 609.5593, 0.0],
            [0.0, 721.5377, 172.854, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        return cls(velo_to_cam=v2c, rect=np.eye(3), proj=proj)


@dataclass(frozen=True)
class ClickAnnotation:
    cls: str
    x_o: float
    z_o: float
    # y_o is 0 by definition of the weak-label scheme.

    @property
    def y_o(self) -> float:
        return 0.0


def parse_velodyne(blob: bytes) -> PointCloud:
    """Decode a velodyne .bin blob into a cloud (still in the velodyne frame)."""
    if len(blob) % 16 != 0:
        raise MalformedInputError(
            f"velodyne blob length {len(blob)} not a multiple of 16 "
            f"(trailing fragment starts at byte {len(blob) - len(blob) % 16})")
    arr = np.frombuffer(blob, dtype="<f4").reshape(-1, 4).astype(np.float64)
    return PointCloud(arr)


def write_velodyne(cloud: PointCloud) -> bytes:
    return cloud.xyzi.astype("<f4").tobytes()


def transform_to_internal(cloud: PointCloud, calib: CalibRecord) -> PointCloud:
    """Apply rect . velo_to_cam to every point; intensity passes through."""
    rt = calib.rect @ calib.velo_to_cam  # 3x4
    out = cloud.xyzi.copy()
    out[:, :3] = cloud.xyz @ rt[:, :3].T + rt[:, 3]
    return PointCloud(out)


def internal_to_velodyne(cloud: PointCloud, calib: CalibRecord) -> PointCloud:
    rt = calib.rect @ calib.velo_to_cam
    out = cloud.xyzi.copy()
    out[:, :3] = (cloud.xyz - rt[:, 3]) @ rt[:, :3]
    return PointCloud(out)


def parse_labels(text: str) -> list[LabelRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) not in (15, 16):
            raise MalformedInputError(
                f"label line {lineno}: expected 15 or 16 fields, got {len(fields)}")
        try:
            vals = [float(f) for f in fields[1:]]
        except ValueError as e:
            raise MalformedInputError(f"label line {lineno}: {e}") from None
        records.append(LabelRecord(
            cls=fields[0],
            truncation=vals[0],
            occlusion=int(vals[1]),
            alpha=vals[2],
            bbox2d=(vals[3], vals[4], vals[5], vals[6]),
            h=vals[7], w=vals[8], l=vals[9],
            x=vals[10], y=vals[11], z=vals[12],
            rotation_y=vals[13],
            score=vals[14] if len(fields) == 16 else None,
        ))
    return records


def to_cuboid(rec: LabelRecord) -> Cuboid:
    """Lift a label's bottom-face y to the volume center (y points down)."""
    return Cuboid(rec.x, rec.y - rec.h / 2.0, rec.z, rec.h, rec.w, rec.l,
                  rec.rotation_y)


def read_clicks(text: str) -> list[ClickAnnotation]:
    clicks = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3:
            raise MalformedInputError(
                f"clicks line {lineno}: expected 'class x z', got {len(fields)} fields")
        try:
            clicks.append(ClickAnnotation(fields[0], float(fields[1]), float(fields[2])))
        except ValueError:
            raise MalformedInputError(
                f"clicks line {lineno}: non-numeric coordinate in {fields[1:]!r}") from None
    return clicks


def write_clicks(clicks: list[ClickAnnotation]) -> str:
    return "".join(f"{c.cls} {c.x_o:.3f} {c.z_o:.3f}\n" for c in clicks)


def _project_bbox2d(cuboid: Cuboid, calib: CalibRecord,
                    image_size: tuple[int, int] = (1242, 375)) -> tuple[float, float, float, float]:
    corners = cuboid.corners_3d()
    if np.any(corners[:, 2] <= 0.1):
        return (-1.0, -1.0, -1.0, -1.0)
    homo = np.hstack([corners, np.ones((8, 1))])
    uvw = homo @ calib.proj.T
    uv = uvw[:, :2] / uvw[:, 2:3]
    u0 = min(max(float(uv[:, 0].min()), 0.0), image_size[0] - 1.0)
    v0 = min(max(float(uv[:, 1].min()), 0.0), image_size[1] - 1.0)
    u1 = min(max(float(uv[:, 0].max()), 0.0), image_size[0] - 1.0)
    v1 = min(max(float(uv[:, 1].max()), 0.0), image_size[1] - 1.0)
    return (u0, v0, u1, v1)


def write_predictions(cuboids: list[Cuboid], confidences: list[float],
                      calib: CalibRecord, cls: str = "Car") -> str:
    """Serialize detections as KITTI label lines with a trailing score field."""
    lines = []
    for cub, conf in zip(cuboids, confidences):
        bbox = _project_bbox2d(cub, calib)
        alpha = cub.theta - math.atan2(cub.cx, cub.cz)
        y_bottom = cub.cy + cub.h / 2.0
        lines.append(
            f"{cls} 0.00 0 {alpha:.4f} "
            f"{bbox[0]:.2f} {bbox[1]:.2f} {bbox[2]:.2f} {bbox[3]:.2f} "
            f"{cub.h:.4f} {cub.w:.4f} {cub.l:.4f} "
            f"{cub.cx:.4f} {y_bottom:.4f} {cub.cz:.4f} "
            f"{cub.theta:.4f} {conf:.4f}\n")
    return "".join(lines)


def write_labels(cuboids: list[Cuboid], calib: CalibRecord, cls: str = "Car") -> str:
    """Like write_predictions but without the score field (groundtruth style)."""
    lines = []
    for cub in cuboids:
        bbox = _project_bbox2d(cub, calib)
        alpha = cub.theta - math.atan2(cub.cx, cub.cz)
        y_bottom = cub.cy + cub.h / 2.0
        lines.append(
            f"{cls} 0.00 0 {alpha:.4f} "
            f"{bbox[0]:.2f} {bbox[1]:.2f} {bbox[2]:.2f} {bbox[3]:.2f} "
            f"{cub.h:.4f} {cub.w:.4f} {cub.l:.4f} "
            f"{cub.cx:.4f} {y_bottom:.4f} {cub.cz:.4f} "
            f"{cub.theta:.4f}\n")
    return "".join(lines)


def _parse_calib_matrix(fields: list[str], rows: int, cols: int) -> np.ndarray:
    return np.array([float(f) for f in fields], dtype=np.float64).reshape(rows, cols)


def parse_calib(text: str) -> CalibRecord:
    entries: dict[str, list[str]] = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        key, rest = line.split(":", 1)
        entries[key.strip()] = rest.split()
    try:
        v2c = _parse_calib_matrix(entries["Tr_velo_to_cam"], 3, 4)
        rect = _parse_calib_matrix(entries["R0_rect"], 3, 3)
        proj = _parse_calib_matrix(entries["P2"], 3, 4)
    except KeyError as e:
        raise MalformedInputError(f"calib file missing {e.args[0]}") from None
    return CalibRecord(velo_to_cam=v2c, rect=rect, proj=proj)


def write_calib(calib: CalibRecord) -> str:
    def fmt(mat: np.ndarray) -> str:
        return " ".join(f"{v:.12e}" for v in mat.flatten())
    return (
        f"P0: {fmt(calib.proj)}\n"
        f"P1: {fmt(calib.proj)}\n"
        f"P2: {fmt(calib.proj)}\n"
        f"P3: {fmt(calib.proj)}\n"
        f"R0_rect: {fmt(calib.rect)}\n"
        f"Tr_velo_to_cam: {fmt(calib.velo_to_cam)}\n"
        f"Tr_imu_to_velo: {fmt(np.hstack([np.eye(3), np.zeros((3, 1))]))}\n"
    )
