import math

import numpy as np
import pytest

from clickdet.detector.augment import (SceneSample, apply_block_transform,
                                       augment_proposal, augment_scene,
                                       extract_instance)
from clickdet.geometry import Cuboid, PointCloud
from clickdet.kitti_io import ClickAnnotation


def make_scene(rng, n=400):
    xyzi = np.column_stack([rng.uniform(-20, 20, n), rng.uniform(-1, 2, n),
                            rng.uniform(5, 45, n), rng.uniform(0, 1, n)])
    clicks = [ClickAnnotation("Car", 3.0, 20.0)]
    cuboids = [Cuboid(3.0, 0.9, 20.0, 1.5, 1.6, 3.9, 0.4)]
    return SceneSample(PointCloud(xyzi), clicks, cuboids)


def make_block(rng, n=64):
    block = np.column_stack([rng.normal(0, 1, (n, 3)), rng.uniform(0, 1, (n, 2))])
    gt = Cuboid(0.1, -0.05, 0.2, 1.5, 1.6, 3.9, 0.3)
    return block, gt


class TestApplyBlockTransform:
    def test_identity_is_noop(self):
        rng = np.random.default_rng(0)
        block, gt = make_block(rng)
        out, gt2 = apply_block_transform(block, gt)
        assert np.array_equal(out, block)
        assert gt2 == gt

    def test_flip_mirrors_x(self):
        rng = np.random.default_rng(1)
        block, gt = make_block(rng)
        out, gt2 = apply_block_transform(block, gt, flip=True)
        assert np.array_equal(out[:, 0], -block[:, 0])
        assert np.array_equal(out[:, 1:], block[:, 1:])
        assert gt2.cx == -gt.cx and gt2.theta == pytest.approx(-gt.theta)

    def test_scale(self):
        rng = np.random.default_rng(2)
        block, gt = make_block(rng)
        out, gt2 = apply_block_transform(block, gt, scale=1.1)
        assert np.allclose(out[:, :3], block[:, :3] * 1.1)
        assert np.array_equal(out[:, 3:], block[:, 3:])
        assert gt2.l == pytest.approx(gt.l * 1.1)
        assert gt2.cz == pytest.approx(gt.cz * 1.1)

    def test_yaw_rotates_points_and_box(self):
        rng = np.random.default_rng(3)
        block, gt = make_block(rng)
        out, gt2 = apply_block_transform(block, gt, yaw=math.pi / 2)
        # (x, z) -> (z, -x) for a +pi/2 turn about the vertical axis
        assert np.allclose(out[:, 0], block[:, 2])
        assert np.allclose(out[:, 2], -block[:, 0])
        assert gt2.theta == pytest.approx(gt.theta + math.pi / 2)
        # box center moves with the points
        assert gt2.cx == pytest.approx(gt.cz)
        assert gt2.cz == pytest.approx(-gt.cx)

    def test_shift(self):
        rng = np.random.default_rng(4)
        block, gt = make_block(rng)
        shift = np.array([0.1, -0.2, 0.3])
        out, gt2 = apply_block_transform(block, gt, shift=shift)
        assert np.allclose(out[:, :3], block[:, :3] + shift)
        assert (gt2.cx, gt2.cy, gt2.cz) == pytest.approx(
            (gt.cx + 0.1, gt.cy - 0.2, gt.cz + 0.3))

    def test_relative_geometry_preserved(self):
        # the transform is a similarity: point-to-box-center offsets scale rigidly
        rng = np.random.default_rng(5)
        block, gt = make_block(rng)
        out, gt2 = apply_block_transform(block, gt, flip=True, scale=1.2,
                                         yaw=0.7, shift=np.array([1.0, 0.5, -2.0]))
        d_in = np.linalg.norm(block[:, :3] - [gt.cx, gt.cy, gt.cz], axis=1)
        d_out = np.linalg.norm(out[:, :3] - [gt2.cx, gt2.cy, gt2.cz], axis=1)
        assert np.allclose(d_out, d_in * 1.2)


class TestAugmentProposal:
    def test_shape_and_theta_range(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            block, gt = make_block(rng)
            out, gt2 = augment_proposal(block, gt, rng)
            assert out.shape == block.shape
            assert -math.pi <= gt2.theta < math.pi
            assert min(gt2.h, gt2.w, gt2.l) > 0

    def test_foreground_column_stays_valid(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            block, gt = make_block(rng)
            out, _ = augment_proposal(block, gt, rng)
            assert np.all(out[:, 4] >= 0) and np.all(out[:, 4] <= 1)

    def test_input_not_mutated(self):
        rng = np.random.default_rng(8)
        block, gt = make_block(rng)
        orig = block.copy()
        augment_proposal(block, gt, rng)
        assert np.array_equal(block, orig)


class TestAugmentScene:
    def test_counts_consistent(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            scene = make_scene(rng)
            out = augment_scene(scene, rng)
            assert len(out.clicks) >= 1
            assert len(out.cuboids) == 1
            assert out.cloud.xyzi.shape[1] == 4

    def test_clicks_track_transform(self):
        # the click and its cuboid move together
        rng = np.random.default_rng(10)
        for _ in range(20):
            scene = make_scene(rng)
            out = augment_scene(scene, rng)
            c = out.cuboids[0]
            click = min(out.clicks,
                        key=lambda k: (k.x_o - c.cx) ** 2 + (k.z_o - c.cz) ** 2)
            assert math.hypot(click.x_o - c.cx, click.z_o - c.cz) < 1e-6

    def test_insertion_adds_click(self):
        rng = np.random.default_rng(2)  # seed chosen so insertion triggers early
        scene = make_scene(rng)
        inst = extract_instance(scene, scene.clicks[0])
        grew = False
        for _ in range(20):
            out = augment_scene(make_scene(rng), rng, insert_pool=[(inst, "Car")])
            if len(out.clicks) == 2:
                grew = True
                break
        assert grew

    def test_input_not_mutated(self):
        rng = np.random.default_rng(11)
        scene = make_scene(rng)
        orig = scene.cloud.xyzi.copy()
        clicks = list(scene.clicks)
        augment_scene(scene, rng)
        assert np.array_equal(scene.cloud.xyzi, orig)
        assert scene.clicks == clicks


class TestExtractInstance:
    def test_recentered_cylinder(self):
        rng = np.random.default_rng(12)
        scene = make_scene(rng, n=2000)
        click = scene.clicks[0]
        inst = extract_instance(scene, click, radius=4.0)
        assert inst.shape[0] > 0
        assert np.all(np.hypot(inst[:, 0], inst[:, 2]) <= 4.0 + 1e-9)
        # y and intensity untouched
        dx = scene.cloud.xyzi[:, 0] - click.x_o
        dz = scene.cloud.xyzi[:, 2] - click.z_o
        rows = np.flatnonzero(dx * dx + dz * dz <= 16.0)
        assert np.array_equal(inst[:, 1], scene.cloud.xyzi[rows, 1])
