"""Release acceptance suite: one test per release criterion.

Every test checks its numeric criterion and its wall-clock budget. The
long-running end-to-end benchmark (train the desk preset on 200 synthetic
scenes, evaluate on 50 held-out scenes) runs once per session through a
module-scoped fixture and feeds both the AP criterion and the
active-vs-automatic comparison.

Run only this file with ``pytest tests/test_acceptance.py -v``.
"""

import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from clickdet.dataset import load_dataset, load_scene
from clickdet.detector.config import (CAR_PROFILE, LossConfig, Stage2Config,
                                      preset)
from clickdet.detector.inference import (active_annotate, candidate_grid,
                                         infer_scene, predict_cuboid)
from clickdet.engine.layers import (FeaturePropagation, Linear, SASpec,
                                    SetAbstraction, SharedMLP)
from clickdet.detector.losses import (BoxHeadOutput, bin_loss, box_loss,
                                      confidence_loss, cross_entropy,
                                      seg_loss, smooth_l1)
from clickdet.detector.train import build_stage2_pool, train_stage1
from clickdet.engine import Adam, ParamTensor
from clickdet.geometry import (Cuboid, CylinderProposal, PointCloud, bev_iou,
                               decanonicalize_cuboid, iou_3d)
from clickdet.kitti_io import (ClickAnnotation, parse_calib, parse_labels,
                               parse_velodyne, to_cuboid,
                               transform_to_internal, write_calib,
                               write_predictions, write_velodyne)
from clickdet.weak_labels import (BinEncoderConfig, PseudoLabelConfig,
                                  decode_offset, encode_offset,
                                  foreground_from_distance,
                                  pseudo_foreground_field)
from clickdet.synthgen import SynthConfig, write_dataset

from tests.test_engine import finite_diff_grad
from tests.test_geometry import monte_carlo_bev_iou, monte_carlo_iou_3d
from tests.test_proposals import brute_ca_nms, brute_oriented_nms
from clickdet.detector.proposals import ca_nms, oriented_nms

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "scripts"))
from run_desk_benchmark import run_benchmark  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures" / "kitti"

pytestmark = pytest.mark.acceptance


def test_foreground_influence_branch_continuity_and_monotonicity():
    """Influence: both branches 1.0 at d=0.7; exp(-1/3) at 1.7; non-increasing."""
    start = time.perf_counter()
    cfg = PseudoLabelConfig()

    near_branch = 1.0  # inside the 0.7 m radius the influence is constant
    tail_branch = float(np.exp(-(0.7 - cfg.gaussian_mean) ** 2 / cfg.gaussian_var))
    assert abs(near_branch - 1.0) <= 1e-9
    assert abs(tail_branch - 1.0) <= 1e-9
    assert abs(float(foreground_from_distance(np.array([0.7]), cfg)[0]) - 1.0) <= 1e-9

    val = float(foreground_from_distance(np.array([1.7]), cfg)[0])
    assert abs(val - math.exp(-1.0 / 3.0)) <= 1e-9

    grid = np.linspace(0.0, 12.0, 1000)
    vals = foreground_from_distance(grid, cfg)
    assert np.all(np.diff(vals) <= 1e-15)

    assert time.perf_counter() - start < 1.0


def test_bin_codec_exact_inverse_and_edge_clamping():
    """Encode/decode is an exact inverse in range; saturates at the +-4 m edge."""
    start = time.perf_counter()
    cfg = BinEncoderConfig()
    rng = np.random.default_rng(0)
    offsets = rng.uniform(-cfg.half_range + 1e-9, cfg.half_range - 1e-9,
                          size=100_000)
    worst = 0.0
    for off in offsets:
        b, r = encode_offset(float(off), cfg)
        worst = max(worst, abs(decode_offset(b, r, cfg) - float(off)))
    assert worst <= 1e-12

    for off in (cfg.half_range, cfg.half_range + 3.0):
        b, r = encode_offset(off, cfg)
        assert b == cfg.num_bins - 1 and r == pytest.approx(1.0, abs=1e-9)
        assert decode_offset(b, r, cfg) == pytest.approx(cfg.half_range,
                                                         abs=1e-12)
    for off in (-cfg.half_range, -cfg.half_range - 3.0):
        b, r = encode_offset(off, cfg)
        assert b == 0 and r == pytest.approx(-1.0, abs=1e-9)
        assert decode_offset(b, r, cfg) == pytest.approx(-cfg.half_range,
                                                         abs=1e-12)

    assert time.perf_counter() - start < 1.0


def _random_overlapping_pair(rng) -> tuple[Cuboid, Cuboid]:
    a = Cuboid(rng.uniform(-2, 2), rng.uniform(-0.5, 0.5), rng.uniform(-2, 2),
               rng.uniform(1.0, 2.0), rng.uniform(1.2, 2.2),
               rng.uniform(3.0, 4.5), rng.uniform(-np.pi, np.pi))
    b = Cuboid(a.cx + rng.uniform(-2, 2), a.cy + rng.uniform(-0.6, 0.6),
               a.cz + rng.uniform(-2, 2),
               rng.uniform(1.0, 2.0), rng.uniform(1.2, 2.2),
               rng.uniform(3.0, 4.5), rng.uniform(-np.pi, np.pi))
    return a, b


def test_iou_matches_monte_carlo_oracle_and_closed_forms():
    """BEV and 3D IoU agree with a 1e6-sample sampling oracle and hand values."""
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    n = 1_000_000
    for k in range(200):
        a, b = _random_overlapping_pair(rng)
        assert bev_iou(a, b) == pytest.approx(
            monte_carlo_bev_iou(a, b, n, seed=k), abs=2e-2)
        assert iou_3d(a, b) == pytest.approx(
            monte_carlo_iou_3d(a, b, n, seed=k), abs=2e-2)

    # Axis-aligned unit squares offset by half a side: 0.5 / 1.5 = 1/3.
    sq = Cuboid(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0)
    shifted = Cuboid(0.5, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0)
    assert bev_iou(sq, shifted) == pytest.approx(1.0 / 3.0, abs=1e-6)

    # Unit square vs itself rotated 45 degrees: regular-octagon overlap.
    rot = Cuboid(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, math.pi / 4.0)
    inter = 2.0 * (math.sqrt(2.0) - 1.0)
    assert bev_iou(sq, rot) == pytest.approx(inter / (2.0 - inter), abs=1e-6)
    assert inter / (2.0 - inter) == pytest.approx(0.7071, abs=5e-5)

    assert time.perf_counter() - start < 30.0


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(np.abs(numeric), 1.0)
    return float(np.max(np.abs(analytic - numeric) / scale))


def _grad_of(build, x0: np.ndarray) -> float:
    t = ParamTensor(x0.copy(), requires_grad=True)
    build(t).backward()
    num = finite_diff_grad(lambda x: float(build(ParamTensor(x.copy())).data),
                           x0.copy())
    return _rel_err(t.grad, num)


def test_gradients_match_finite_differences_for_all_layers_and_losses():
    """Every layer kind and every loss: reverse-mode vs central differences."""
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst: dict[str, float] = {}

    lin = Linear(rng, 4, 3, "lin")
    x0 = rng.normal(size=(5, 4))
    worst["linear"] = _grad_of(lambda t: (lin(t) * lin(t)).sum(), x0)

    mlp = SharedMLP(rng, [3, 6, 4], "mlp")
    worst["shared_mlp"] = _grad_of(lambda t: mlp(t).sum(), rng.normal(size=(7, 3)))

    xyz = rng.normal(size=(16, 3))
    sa = SetAbstraction(rng, 2, SASpec(4, (0.8, 1.6), (4, 8), (4, 4)), "sa")

    def sa_loss(t):
        _, feats = sa(xyz, t)
        return (feats * feats).sum()
    worst["set_abstraction"] = _grad_of(sa_loss, rng.normal(size=(16, 2)))

    fp = FeaturePropagation(rng, 3, 2, (4, 3), "fp")
    coarse_xyz, fine_xyz = rng.normal(size=(5, 3)), rng.normal(size=(11, 3))
    skip = ParamTensor(rng.normal(size=(11, 2)))

    def fp_loss(t):
        out = fp(coarse_xyz, t, fine_xyz, skip)
        return (out * out).sum()
    worst["feature_propagation"] = _grad_of(fp_loss, rng.normal(size=(5, 3)))

    worst["smooth_l1"] = _grad_of(lambda t: smooth_l1(t).sum(),
                                  rng.normal(size=(6,)) * 2.0)

    target = (rng.uniform(size=8) > 0.5).astype(float)
    worst["seg"] = _grad_of(lambda t: seg_loss(t, target),
                            rng.uniform(0.05, 0.95, size=8))

    bins = rng.integers(0, 5, size=4)
    worst["cross_entropy"] = _grad_of(lambda t: cross_entropy(t, bins),
                                      rng.normal(size=(4, 5)))

    res_t = rng.uniform(-1, 1, size=4)
    logits0 = rng.normal(size=(4, 5))

    res0 = rng.normal(size=(4, 5))
    worst["bin_residual"] = _grad_of(
        lambda t: bin_loss(ParamTensor(logits0.copy()), t, bins, res_t), res0)
    worst["bin_logits"] = _grad_of(
        lambda t: bin_loss(t, ParamTensor(res0.copy()), bins, res_t), logits0)

    anchor = CAR_PROFILE.mean_size
    gts = [Cuboid(0.3, 0.1, -0.2, 1.5, 1.6, 3.9, 0.4),
           Cuboid(-0.5, 0.0, 0.6, 1.4, 1.7, 3.7, -1.1)]

    def box_from_raw(t):
        return box_loss(BoxHeadOutput(t), gts, anchor, LossConfig())
    worst["box"] = _grad_of(box_from_raw, rng.normal(size=(2, 30)) * 0.3)

    cubs = [Cuboid(0.2, 0.0, 0.1, 1.5, 1.6, 3.9, 0.3)]
    worst["confidence"] = _grad_of(
        lambda t: confidence_loss(t, cubs, [gts], LossConfig()),
        rng.uniform(0.2, 0.8, size=(1, 1)))

    assert max(worst.values()) < 1e-4, worst
    assert time.perf_counter() - start < 60.0


def test_nms_matches_brute_force_greedy_oracles():
    """Both suppression passes equal their brute-force oracles on 1000 sets."""
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    for _ in range(1000):
        props = [CylinderProposal(rng.uniform(-20, 20), rng.uniform(0, 40),
                                  4.0, float(rng.uniform(0, 1)))
                 for _ in range(int(rng.integers(1, 30)))]
        kept = ca_nms(props, 4.0)
        assert kept == brute_ca_nms(props, 4.0)
        for i, p in enumerate(kept):
            for q in kept[:i]:
                assert math.hypot(p.cx - q.cx, p.cz - q.cz) > 4.0

    for _ in range(1000):
        n = int(rng.integers(1, 9))
        cubs = [Cuboid(rng.uniform(-4, 4), 0.8, rng.uniform(0, 8),
                       1.5, 1.6, 3.9, rng.uniform(-np.pi, np.pi))
                for _ in range(n)]
        confs = [float(rng.uniform(0, 1)) for _ in range(n)]
        kept = oriented_nms(cubs, confs, 0.3)
        assert kept == brute_oriented_nms(cubs, confs, 0.3)
        for i in kept:
            for j in kept:
                if i < j:
                    assert bev_iou(cubs[i], cubs[j]) <= 0.3

    assert time.perf_counter() - start < 10.0


def test_overfit_stage1_loss_drop_and_stage2_box_accuracy(tmp_path):
    """Stage 1 overfits 5 scenes (>=90% loss drop in 200 steps); stage 2
    overfits a 20-proposal pool to <0.3 m center error and >=0.5 3D IoU."""
    start = time.perf_counter()
    write_dataset(SynthConfig(seed=5, num_scenes=5), tmp_path)
    scenes = load_dataset(tmp_path)
    s1_cfg, s2_cfg, train_cfg = preset("desk", seed=5)
    train_cfg = replace(train_cfg, stage1_iterations=200, log_every=10,
                        augment=False)

    s1_net, log = train_stage1(scenes, s1_cfg, LossConfig(), train_cfg,
                               CAR_PROFILE)
    totals = [float(line.rsplit("total=", 1)[1]) for line in log.lines]
    assert totals[-1] <= 0.10 * totals[0], (totals[0], totals[-1])

    pool, _ = build_stage2_pool(scenes, s1_net, s2_cfg, CAR_PROFILE, train_cfg)
    assert len(pool) >= 20
    pool = pool[:20]
    rng = np.random.default_rng(5)
    from clickdet.detector.stage2 import Stage2Net
    net = Stage2Net(s2_cfg, rng, with_confidence=False, name="overfit")
    opt = Adam(net.parameters(), lr=train_cfg.lr, weight_decay=0.0)
    anchor = CAR_PROFILE.mean_size
    blocks = [e.block for e in pool]
    gts_local = [e.gt_local for e in pool]
    for _ in range(300):
        opt.zero_grad()
        out, _ = net.forward_batch(blocks)
        box_loss(out, gts_local, anchor, LossConfig()).backward()
        opt.step()

    out, _ = net.forward_batch(blocks)
    errs, ious = [], []
    for i, entry in enumerate(pool):
        pred = decanonicalize_cuboid(out.decode(i, anchor), entry.proposal)
        gt = entry.gt_world
        errs.append(math.sqrt((pred.cx - gt.cx) ** 2 + (pred.cy - gt.cy) ** 2
                              + (pred.cz - gt.cz) ** 2))
        ious.append(iou_3d(pred, gt))
    assert float(np.mean(errs)) < 0.3, np.mean(errs)
    assert float(np.mean(ious)) >= 0.5, np.mean(ious)

    assert time.perf_counter() - start < 600.0


@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    """Train the desk preset once; share the report and artifacts."""
    workdir = tmp_path_factory.mktemp("bench")
    start = time.perf_counter()
    report, out = run_benchmark(train_scenes=200, test_scenes=50, seed=0,
                                workdir=str(workdir), verbose=False)
    report["_wall"] = time.perf_counter() - start
    return report, out


def test_end_to_end_desk_benchmark_ap(benchmark):
    """Noisy clicks + 25% precise: BEV AP@0.5 >= 0.70, 3D AP@0.5 >= 0.60."""
    report, _ = benchmark
    assert report["_wall"] < 3600.0
    assert report["bev_ap_moderate"] is not None
    assert report["bev_ap_moderate"] >= 0.70, report["table"]
    assert report["ap3d_moderate"] >= 0.60, report["table"]


def test_active_mode_grid_confidence_and_iou_dominance(benchmark):
    """5x5 grid at 0.1 m; returned confidence is the candidate max; clicking
    true centers (active) is at least as accurate as automatic inference."""
    report, out = benchmark
    from clickdet.detector.train import load_checkpoint
    s1_net, init_net, refine_net, profile, _ = load_checkpoint(out / "model.ckpt")

    centers = candidate_grid(10.0, 20.0)
    assert len(centers) == 25
    expected = [(10.0 + (i - 2) * 0.1, 20.0 + (j - 2) * 0.1)
                for i in range(5) for j in range(5)]
    for got, want in zip(centers, expected):
        assert got[0] == pytest.approx(want[0], abs=1e-12)
        assert got[1] == pytest.approx(want[1], abs=1e-12)

    data_dir = out / "data"
    stems = sorted(p.stem for p in (data_dir / "velodyne").glob("*.bin"))[200:]
    active_ious, auto_ious = [], []
    checked_conf = False
    for stem in stems[:10]:
        sample = load_scene(data_dir, stem)
        dets = infer_scene(sample.cloud, s1_net, init_net, refine_net, profile)
        for gt in sample.cuboids:
            click = ClickAnnotation("Car", gt.cx, gt.cz)
            try:
                cub, conf, cands = active_annotate(sample.cloud, click,
                                                   init_net, refine_net, profile)
            except Exception:
                continue
            active_ious.append(iou_3d(cub, gt))
            matched = [iou_3d(c, gt) for c, _ in dets
                       if math.hypot(c.cx - gt.cx, c.cz - gt.cz) < 2.0]
            auto_ious.append(max(matched) if matched else 0.0)
            if not checked_conf:
                # Independently re-score every candidate cylinder.
                best = -np.inf
                for cx, cz in cands:
                    fg = pseudo_foreground_field(
                        sample.cloud, [ClickAnnotation("Car", cx, cz)],
                        profile.pseudo_config())
                    prop = CylinderProposal(cx, cz, profile.proposal_radius, 1.0)
                    try:
                        _, c2 = predict_cuboid(init_net, refine_net,
                                               sample.cloud, fg, prop,
                                               profile.mean_size)
                    except Exception:
                        continue
                    best = max(best, c2)
                assert conf == pytest.approx(best, abs=1e-9)
                checked_conf = True
    assert checked_conf
    assert len(active_ious) >= 10
    assert float(np.mean(active_ious)) >= float(np.mean(auto_ious)), (
        np.mean(active_ious), np.mean(auto_ious))


def test_kitti_fixture_roundtrips_and_transform_oracle():
    """Fixture scene: byte-stable roundtrips and independent rect-transform."""
    start = time.perf_counter()
    blob = (FIXTURES / "velodyne" / "000000.bin").read_bytes()
    cloud = parse_velodyne(blob)
    assert write_velodyne(cloud) == blob

    calib_text = (FIXTURES / "calib" / "000000.txt").read_text()
    calib = parse_calib(calib_text)
    again = parse_calib(write_calib(calib))
    np.testing.assert_array_equal(again.velo_to_cam, calib.velo_to_cam)
    np.testing.assert_array_equal(again.rect, calib.rect)
    np.testing.assert_array_equal(again.proj, calib.proj)

    records = parse_labels((FIXTURES / "label_2" / "000000.txt").read_text())
    cars = [r for r in records if r.cls == "Car"]
    assert len(cars) == 2
    cubs = [to_cuboid(r) for r in cars]
    reparsed = parse_labels(write_predictions(cubs, [0.5, 0.5], calib))
    for orig, rec in zip(cars, reparsed):
        for field in ("h", "w", "l", "x", "y", "z", "rotation_y"):
            assert getattr(rec, field) == pytest.approx(
                getattr(orig, field), abs=1e-3)

    # Independent reference transform: rectify(velo_to_cam(p)), plain loops.
    rt = np.asarray(calib.rect) @ np.asarray(calib.velo_to_cam)
    ours = transform_to_internal(cloud, calib).xyz
    for i in range(cloud.xyz.shape[0]):
        p = np.append(cloud.xyz[i], 1.0)
        ref = np.array([float(rt[r] @ p) for r in range(3)])
        assert np.max(np.abs(ours[i] - ref)) < 1e-4

    assert time.perf_counter() - start < 10.0
