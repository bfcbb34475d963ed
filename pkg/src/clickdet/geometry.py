"""Coordinate frames, oriented boxes, cylinders, and the IoU kernels.

Internal frame convention (used everywhere downstream):
  x right, y down (the vertical axis), z forward.
  The bird's-eye view (BEV) is the (x, z) plane.

A cuboid's yaw ``theta`` is measured about the vertical axis so that the
box's length axis points along ``(sin(theta), 0, cos(theta))``; at
``theta = 0`` the length axis is +z. Rotating a cloud by ``-theta`` hence
aligns the box's length axis with +z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    z: float
    intensity: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite point coordinates: ({self.x}, {self.y}, {self.z})")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity {self.intensity} outside [0, 1]")


class PointCloud:
    """Ordered point set backed by an (N, 4) float64 array [x, y, z, intensity].

    Order is stable; index identity is used by grouping operations.
    """

    __slots__ = ("xyzi",)

    def __init__(self, xyzi: np.ndarray):
        arr = np.asarray(xyzi, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValueError(f"expected (N, 4) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr[:, :3])):
            raise ValueError("non-finite coordinates in point cloud")
        self.xyzi = arr

    @classmethod
    def from_points(cls, points: list[Point]) -> "PointCloud":
        if not points:
            return cls(np.zeros((0, 4)))
        return cls(np.array([[p.x, p.y, p.z, p.intensity] for p in points]))

    @property
    def xyz(self) -> np.ndarray:
        return self.xyzi[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.xyzi[:, 3]

    def __len__(self) -> int:
        return self.xyzi.shape[0]

    def __getitem__(self, i: int) -> Point:
        x, y, z, it = self.xyzi[i]
        return Point(x, y, z, it)

    def select(self, indices) -> "PointCloud":
        return PointCloud(self.xyzi[np.asarray(indices, dtype=np.intp)])


@dataclass(frozen=True)
class Cuboid:
    """Oriented 3D box: volume-center (cx, cy, cz), size (h, w, l), yaw theta.

    Vertical extent is [cy - h/2, cy + h/2]; the stored y is the center of
    volume (KITTI label files store the bottom face instead, converted on IO).
    """

    cx: float
    cy: float
    cz: float
    h: float
    w: float
    l: float
    theta: float

    def __post_init__(self):
        if not (self.h > 0 and self.w > 0 and self.l > 0):
            raise ValueError(f"non-positive size (h={self.h}, w={self.w}, l={self.l})")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def volume(self) -> float:
        return self.h * self.w * self.l

    def bev_corners(self) -> np.ndarray:
        """(4, 2) footprint corners on the (x, z) plane, counter-clockwise."""
        s, c = math.sin(self.theta), math.cos(self.theta)
        u = np.array([s, c])   # length axis
        v = np.array([c, -s])  # width axis
        ctr = np.array([self.cx, self.cz])
        hl, hw = self.l / 2.0, self.w / 2.0
        return np.array([
            ctr + hl * u + hw * v,
            ctr + hl * u - hw * v,
            ctr - hl * u - hw * v,
            ctr - hl * u + hw * v,
        ])

    def corners_3d(self) -> np.ndarray:
        """(8, 3) corners: bottom face (y = cy + h/2, y points down) then top."""
        bev = self.bev_corners()
        out = np.zeros((8, 3))
        out[:4, [0, 2]] = bev
        out[4:, [0, 2]] = bev
        out[:4, 1] = self.cy + self.h / 2.0
        out[4:, 1] = self.cy - self.h / 2.0
        return out


@dataclass(frozen=True)
class CylinderProposal:
    """Vertical cylinder on the (x, z) plane; unbounded along y."""

    cx: float
    cz: float
    radius: float
    confidence: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"non-positive radius {self.radius}")


def _polygon_area(poly: np.ndarray) -> float:
    x, z = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(z, -1)) - np.dot(z, np.roll(x, -1)))


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of convex `subject` against convex CCW `clip`."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            return np.zeros((0, 2))
        a, b = clip[i], clip[(i + 1) % n]
        edge = b - a
        inputs, output = output, []
        prev = inputs[-1]
        prev_in = edge[0] * (prev[1] - a[1]) - edge[1] * (prev[0] - a[0]) >= 0
        for cur in inputs:
            cur_in = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0]) >= 0
            if cur_in != prev_in:
                d = cur - prev
                denom = edge[0] * d[1] - edge[1] * d[0]
                if denom != 0.0:
                    t = (edge[0] * (a[1] - prev[1]) - edge[1] * (a[0] - prev[0])) / denom
                    output.append(prev + t * d)
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return np.array(output) if output else np.zeros((0, 2))


def _ccw(poly: np.ndarray) -> np.ndarray:
    x, z = poly[:, 0], poly[:, 1]
    signed = 0.5 * (np.dot(x, np.roll(z, -1)) - np.dot(z, np.roll(x, -1)))
    return poly if signed > 0 else poly[::-1]


def bev_intersection_area(a: Cuboid, b: Cuboid) -> float:
    inter = _clip_polygon(_ccw(a.bev_corners()), _ccw(b.bev_corners()))
    if len(inter) < 3:
        return 0.0
    return _polygon_area(inter)


def bev_iou(a: Cuboid, b: Cuboid) -> float:
    """IoU of the two oriented (w x l) footprints on the (x, z) plane."""
    inter = bev_intersection_area(a, b)
    union = a.w * a.l + b.w * b.l - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def iou_3d(a: Cuboid, b: Cuboid) -> float:
    """3D IoU: BEV polygon intersection times vertical overlap over union volume."""
    inter_area = bev_intersection_area(a, b)
    if inter_area == 0.0:
        return 0.0
    y_lo = max(a.cy - a.h / 2.0, b.cy - b.h / 2.0)
    y_hi = min(a.cy + a.h / 2.0, b.cy + b.h / 2.0)
    overlap = max(0.0, y_hi - y_lo)
    inter_vol = inter_area * overlap
    union = a.volume + b.volume - inter_vol
    if union <= 0.0:
        return 0.0
    return min(max(inter_vol / union, 0.0), 1.0)


def points_in_cylinder(cloud: PointCloud, prop: CylinderProposal) -> np.ndarray:
    """Indices of points whose horizontal distance to the axis is <= radius."""
    dx = cloud.xyzi[:, 0] - prop.cx
    dz = cloud.xyzi[:, 2] - prop.cz
    return np.flatnonzero(dx * dx + dz * dz <= prop.radius * prop.radius)


def rotation_about_vertical(theta: float) -> np.ndarray:
    """3x3 rotation by `theta` about the vertical (y) axis of the internal frame.

    Maps (sin t, 0, cos t) to (sin(t+theta), 0, cos(t+theta)).
    """
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def canonicalize(cloud: PointCloud, frame: Cuboid | CylinderProposal) -> PointCloud:
    """Express `cloud` in the frame of a proposal or cuboid.

    Cylinders translate horizontally only; cuboids translate to the center and
    rotate by -theta so the length axis ends up along +z.
    """
    out = cloud.xyzi.copy()
    if isinstance(frame, CylinderProposal):
        out[:, 0] -= frame.cx
        out[:, 2] -= frame.cz
        return PointCloud(out)
    out[:, 0] -= frame.cx
    out[:, 1] -= frame.cy
    out[:, 2] -= frame.cz
    rot = rotation_about_vertical(-frame.theta)
    out[:, :3] = out[:, :3] @ rot.T
    return PointCloud(out)


def decanonicalize_cuboid(local: Cuboid, frame: Cuboid | CylinderProposal) -> Cuboid:
    """Map a cuboid expressed in a canonical frame back to world coordinates."""
    if isinstance(frame, CylinderProposal):
        return Cuboid(local.cx + frame.cx, local.cy, local.cz + frame.cz,
                      local.h, local.w, local.l, local.theta)
    rot = rotation_about_vertical(frame.theta)
    ctr = rot @ np.array([local.cx, local.cy, local.cz])
    return Cuboid(ctr[0] + frame.cx, ctr[1] + frame.cy, ctr[2] + frame.cz,
                  local.h, local.w, local.l, local.theta + frame.theta)


def cuboid_to_canonical(world: Cuboid, frame: Cuboid | CylinderProposal) -> Cuboid:
    """Express a world-frame cuboid in the canonical frame of `frame`."""
    if isinstance(frame, CylinderProposal):
        return Cuboid(world.cx - frame.cx, world.cy, world.cz - frame.cz,
                      world.h, world.w, world.l, world.theta)
    rot = rotation_about_vertical(-frame.theta)
    ctr = rot @ np.array([world.cx - frame.cx, world.cy - frame.cy, world.cz - frame.cz])
    return Cuboid(ctr[0], ctr[1], ctr[2], world.h, world.w, world.l,
                  world.theta - frame.theta)
