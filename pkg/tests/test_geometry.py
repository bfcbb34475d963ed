import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clickdet.geometry import (Cuboid, CylinderProposal, Point, PointCloud,
                               bev_iou, canonicalize, decanonicalize_cuboid,
                               cuboid_to_canonical, iou_3d, points_in_cylinder,
                               rotation_about_vertical)


def monte_carlo_bev_iou(a: Cuboid, b: Cuboid, n: int, seed: int = 0) -> float:
    """Area-sampling oracle for the BEV footprint IoU."""
    rng = np.random.default_rng(seed)
    corners = np.vstack([a.bev_corners(), b.bev_corners()])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    pts = rng.uniform(lo, hi, size=(n, 2))

    def inside(c: Cuboid, p: np.ndarray) -> np.ndarray:
        d = p - np.array([c.cx, c.cz])
        s, co = math.sin(c.theta), math.cos(c.theta)
        along = d @ np.array([s, co])
        across = d @ np.array([co, -s])
        return (np.abs(along) <= c.l / 2) & (np.abs(across) <= c.w / 2)

    in_a, in_b = inside(a, pts), inside(b, pts)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def monte_carlo_iou_3d(a: Cuboid, b: Cuboid, n: int, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    ca = np.vstack([a.corners_3d(), b.corners_3d()])
    lo, hi = ca.min(axis=0), ca.max(axis=0)
    pts = rng.uniform(lo, hi, size=(n, 3))

    def inside(c: Cuboid, p: np.ndarray) -> np.ndarray:
        d = p - np.array([c.cx, c.cy, c.cz])
        s, co = math.sin(c.theta), math.cos(c.theta)
        along = d[:, [0, 2]] @ np.array([s, co])
        across = d[:, [0, 2]] @ np.array([co, -s])
        return ((np.abs(along) <= c.l / 2) & (np.abs(across) <= c.w / 2)
                & (np.abs(d[:, 1]) <= c.h / 2))

    in_a, in_b = inside(a, pts), inside(b, pts)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def random_box(rng) -> Cuboid:
    return Cuboid(rng.uniform(-3, 3), rng.uniform(-1, 1), rng.uniform(-3, 3),
                  rng.uniform(0.5, 2.5), rng.uniform(0.5, 2.5),
                  rng.uniform(0.5, 4.0), rng.uniform(-math.pi, math.pi))


class TestBevIou:
    def test_identical(self):
        a = Cuboid(1, 2, 3, 1.5, 1.6, 3.9, 0.4)
        assert bev_iou(a, a) == pytest.approx(1.0)

    def test_axis_aligned_offset(self):
        a = Cuboid(0, 0, 0, 1, 1, 1, 0)
        b = Cuboid(0.5, 0, 0, 1, 1, 1, 0)
        # closed form: overlap 0.5, union 1.5
        assert bev_iou(a, b) == pytest.approx(1 / 3, abs=1e-6)

    def test_rotated_45(self):
        a = Cuboid(0, 0, 0, 1, 1, 1, 0)
        b = Cuboid(0, 0, 0, 1, 1, 1, math.pi / 4)
        inter = 2 * (math.sqrt(2) - 1)  # regular octagon area
        expected = inter / (2 - inter)
        assert bev_iou(a, b) == pytest.approx(expected, abs=1e-6)
        assert bev_iou(a, b) == pytest.approx(0.7071, abs=1e-4)

    def test_symmetry_random(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, b = random_box(rng), random_box(rng)
            assert bev_iou(a, b) == pytest.approx(bev_iou(b, a), abs=1e-12)
            assert 0.0 <= bev_iou(a, b) <= 1.0

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(3)
        for i in range(20):
            a, b = random_box(rng), random_box(rng)
            mc = monte_carlo_bev_iou(a, b, 200_000, seed=i)
            assert bev_iou(a, b) == pytest.approx(mc, abs=2e-2)

    def test_theta_pi_footprint_symmetry(self):
        a = Cuboid(0, 0, 0, 1, 1.2, 3.0, 0.3)
        b = Cuboid(0, 0, 0, 1, 1.2, 3.0, 0.3 + math.pi)
        assert bev_iou(a, b) == pytest.approx(1.0, abs=1e-9)


class TestIou3d:
    def test_identical(self):
        a = Cuboid(1, 2, 3, 1.5, 1.6, 3.9, -0.7)
        assert iou_3d(a, a) == pytest.approx(1.0)

    def test_vertical_offset(self):
        a = Cuboid(0, 0, 0, 1, 1, 1, 0)
        b = Cuboid(0, 0.5, 0, 1, 1, 1, 0)
        assert iou_3d(a, b) == pytest.approx(1 / 3, abs=1e-9)

    def test_disjoint(self):
        a = Cuboid(0, 0, 0, 1, 1, 1, 0)
        b = Cuboid(100, 0, 0, 1, 1, 1, 0.9)
        assert iou_3d(a, b) == 0.0

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(11)
        for i in range(10):
            a, b = random_box(rng), random_box(rng)
            mc = monte_carlo_iou_3d(a, b, 200_000, seed=100 + i)
            assert iou_3d(a, b) == pytest.approx(mc, abs=2e-2)


class TestPointsInCylinder:
    def test_unbounded_y(self):
        cloud = PointCloud(np.array([[3.0, 100.0, 0.0, 0.0]]))
        prop = CylinderProposal(0, 0, 4.0)
        assert list(points_in_cylinder(cloud, prop)) == [0]

    def test_outside(self):
        cloud = PointCloud(np.array([[5.0, 0.0, 0.0, 0.0]]))
        assert points_in_cylinder(cloud, CylinderProposal(0, 0, 4.0)).size == 0

    def test_boundary_closed(self):
        cloud = PointCloud(np.array([[4.0, -2.0, 0.0, 0.0]]))
        assert list(points_in_cylinder(cloud, CylinderProposal(0, 0, 4.0))) == [0]

    def test_vertical_translation_invariance(self):
        rng = np.random.default_rng(0)
        xyzi = rng.normal(0, 3, (100, 4))
        xyzi[:, 3] = 0.5
        prop = CylinderProposal(1.0, -0.5, 2.0)
        base = points_in_cylinder(PointCloud(xyzi), prop)
        shifted = xyzi.copy()
        shifted[:, 1] += 123.0
        assert np.array_equal(base, points_in_cylinder(PointCloud(shifted), prop))


class TestCanonicalize:
    def test_cylinder_translation_only(self):
        cloud = PointCloud(np.array([[3.0, 5.0, 3.0, 0.2]]))
        out = canonicalize(cloud, CylinderProposal(2, 3, radius=4))
        assert out.xyzi[0, :3] == pytest.approx([1.0, 5.0, 0.0])
        assert out.xyzi[0, 3] == 0.2

    def test_cuboid_zero_yaw(self):
        cloud = PointCloud(np.array([[2.0, 0.0, 4.0, 0.0]]))
        out = canonicalize(cloud, Cuboid(2, 0, 3, 1, 1, 1, 0))
        assert out.xyzi[0, :3] == pytest.approx([0.0, 0.0, 1.0])

    def test_cuboid_quarter_turn(self):
        cloud = PointCloud(np.array([[1.0, 0.0, 0.0, 0.0]]))
        out = canonicalize(cloud, Cuboid(0, 0, 0, 1, 1, 1, math.pi / 2))
        assert out.xyzi[0, :3] == pytest.approx([0.0, 0.0, 1.0], abs=1e-12)

    def test_input_unmodified(self):
        arr = np.array([[1.0, 2.0, 3.0, 0.5]])
        cloud = PointCloud(arr.copy())
        canonicalize(cloud, Cuboid(5, 5, 5, 1, 1, 1, 0.3))
        assert np.array_equal(cloud.xyzi, arr)

    @given(st.floats(-math.pi, math.pi - 1e-9), st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip(self, theta, seed):
        rng = np.random.default_rng(seed)
        xyzi = rng.normal(0, 5, (20, 4))
        xyzi[:, 3] = np.clip(np.abs(xyzi[:, 3]) / 20, 0, 1)
        frame = Cuboid(rng.normal(), rng.normal(), rng.normal(), 1, 1, 2, theta)
        local = canonicalize(PointCloud(xyzi), frame)
        rot = rotation_about_vertical(frame.theta)
        restored = local.xyz @ rot.T + np.array([frame.cx, frame.cy, frame.cz])
        assert np.max(np.abs(restored - xyzi[:, :3])) < 1e-9

    def test_cuboid_frame_roundtrip(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            world = random_box(rng)
            frame = random_box(rng)
            back = decanonicalize_cuboid(cuboid_to_canonical(world, frame), frame)
            assert back.cx == pytest.approx(world.cx, abs=1e-9)
            assert back.cy == pytest.approx(world.cy, abs=1e-9)
            assert back.cz == pytest.approx(world.cz, abs=1e-9)
            assert math.sin(back.theta) == pytest.approx(math.sin(world.theta), abs=1e-9)
            assert math.cos(back.theta) == pytest.approx(math.cos(world.theta), abs=1e-9)


class TestInvariants:
    def test_point_validation(self):
        with pytest.raises(ValueError):
            Point(float("nan"), 0, 0)
        with pytest.raises(ValueError):
            Point(0, 0, 0, intensity=1.5)

    def test_cuboid_validation(self):
        with pytest.raises(ValueError):
            Cuboid(0, 0, 0, 0.0, 1, 1, 0)
        c = Cuboid(0, 0, 0, 1, 1, 1, 3 * math.pi)
        assert -math.pi <= c.theta < math.pi

    def test_cylinder_validation(self):
        with pytest.raises(ValueError):
            CylinderProposal(0, 0, radius=0.0)
