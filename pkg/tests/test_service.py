import numpy as np
import pytest
from fastapi.testclient import TestClient

from clickdet.dataset import load_dataset
from clickdet.detector.config import CAR_PROFILE, LossConfig, TrainConfig, preset
from clickdet.detector.train import save_checkpoint, train_stage1, train_stage2
from clickdet.geometry import Cuboid
from clickdet.service import BevMapping, create_app, rasterize_bev
from clickdet.synthgen import SynthConfig, write_dataset


@pytest.fixture(scope="module")
def data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc-data")
    write_dataset(SynthConfig(seed=30, num_scenes=3, vehicles_min=1,
                              vehicles_max=2), root)
    return root


@pytest.fixture(scope="module")
def checkpoint(data_root, tmp_path_factory):
    """A briefly-trained desk-preset model, enough to exercise active mode."""
    desk1, desk2, _ = preset("desk")
    tc = TrainConfig(stage1_iterations=2, stage1_batch=1,
                     stage2_iterations=2, stage2_batch=2, log_every=1)
    data = load_dataset(data_root, limit=2)
    s1, _ = train_stage1(data, desk1, LossConfig(), tc, CAR_PROFILE)
    init, refine, _ = train_stage2(data, s1, desk2, LossConfig(), tc, CAR_PROFILE)
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    save_checkpoint(path, s1, init, refine, CAR_PROFILE, "desk")
    return path


@pytest.fixture()
def client(data_root, tmp_path):
    app = create_app(str(data_root), checkpoint=None,
                     annotations_dir=str(tmp_path / "ann"))
    return TestClient(app)


class TestBevMapping:
    def test_pixel_world_roundtrip(self):
        m = BevMapping()
        for px, pz in [(0, 0), (400, 352), (799, 703)]:
            x, z = m.pixel_to_world(px, pz)
            assert m.world_to_pixel(x, z) == (px, pz)

    def test_pixel_centers(self):
        m = BevMapping()
        assert m.pixel_to_world(0, 0) == pytest.approx((-39.95, 0.05))
        assert m.pixel_to_world(799, 703) == pytest.approx((39.95, 70.35))

    def test_contains(self):
        m = BevMapping()
        assert m.contains(0.0, 35.0)
        assert not m.contains(-41.0, 35.0)
        assert not m.contains(0.0, 70.4)

    def test_rasterize_channels(self, data_root):
        cloud = load_dataset(data_root, limit=1)[0].cloud
        grid = rasterize_bev(cloud)
        assert grid["width"] == 800 and grid["height"] == 704
        mh = np.asarray(grid["max_height"])
        dn = np.asarray(grid["density"])
        assert mh.shape == (704, 800) and dn.shape == (704, 800)
        assert mh.min() >= 0 and mh.max() <= 1
        assert dn.min() >= 0 and dn.max() <= 1
        assert dn.max() > 0  # scene has points in the window

    def test_rasterize_empty_errors(self):
        from clickdet.geometry import PointCloud
        with pytest.raises(ValueError):
            rasterize_bev(PointCloud(np.zeros((0, 4))))


class TestEndpoints:
    def test_scene_list(self, client):
        r = client.get("/scenes")
        assert r.status_code == 200
        assert r.json()["scenes"] == ["000000", "000001", "000002"]

    def test_bev_payload(self, client):
        r = client.get("/scenes/000000/bev")
        assert r.status_code == 200
        body = r.json()
        assert body["meters_per_pixel"] == 0.1
        assert body["x_min"] == -40.0

    def test_unknown_scene_404(self, client):
        assert client.get("/scenes/zzz/bev").status_code == 404
        assert client.get("/scenes/zzz/annotations").status_code == 404

    def test_record_only_click(self, client):
        r = client.post("/scenes/000000/clicks",
                        json={"x": 3.0, "z": 20.0, "mode": "record-only"})
        assert r.status_code == 200
        assert r.json()["status"] == "recorded"
        ann = client.get("/scenes/000000/annotations").json()
        assert ann["clicks"] == [{"cls": "Car", "x": 3.0, "z": 20.0}]

    def test_pixel_click(self, client):
        r = client.post("/scenes/000000/clicks",
                        json={"px": 400, "pz": 200, "mode": "record-only"})
        body = r.json()
        assert body["x"] == pytest.approx(0.05)
        assert body["z"] == pytest.approx(20.05)

    def test_click_outside_window(self, client):
        r = client.post("/scenes/000000/clicks",
                        json={"x": -60.0, "z": 20.0, "mode": "record-only"})
        assert r.status_code == 400

    def test_click_needs_coordinates(self, client):
        r = client.post("/scenes/000000/clicks", json={"mode": "record-only"})
        assert r.status_code == 422

    def test_active_without_model_409(self, client):
        r = client.post("/scenes/000000/clicks",
                        json={"x": 3.0, "z": 20.0, "mode": "active"})
        assert r.status_code == 409

    def test_accept_and_delete(self, client):
        cub = {"cx": 1.0, "cy": 0.9, "cz": 20.0, "h": 1.5, "w": 1.6,
               "l": 3.9, "theta": 0.4}
        r = client.post("/scenes/000001/accept",
                        json={"cuboid": cub, "confidence": 0.8})
        assert r.status_code == 200
        assert r.json()["index"] == 0
        ann = client.get("/scenes/000001/annotations").json()
        assert len(ann["cuboids"]) == 1
        assert ann["cuboids"][0]["cx"] == 1.0
        assert ann["cuboids"][0]["confidence"] == 0.8

        r = client.delete("/scenes/000001/annotations/0")
        assert r.status_code == 200
        assert client.get("/scenes/000001/annotations").json()["cuboids"] == []

    def test_delete_missing_404(self, client):
        assert client.delete("/scenes/000001/annotations/5").status_code == 404

    def test_accept_bad_cuboid_422(self, client):
        r = client.post("/scenes/000001/accept",
                        json={"cuboid": {"cx": 0.0}})
        assert r.status_code == 422


class TestPersistence:
    def test_persist_and_reload(self, data_root, tmp_path):
        ann = tmp_path / "ann"
        app = create_app(str(data_root), annotations_dir=str(ann))
        c = TestClient(app)
        c.post("/scenes/000000/clicks",
               json={"x": 3.0, "z": 20.0, "mode": "record-only"})
        cub = {"cx": 3.0, "cy": 0.9, "cz": 20.0, "h": 1.5, "w": 1.6,
               "l": 3.9, "theta": 0.2}
        c.post("/scenes/000000/accept", json={"cuboid": cub, "confidence": 0.7})
        c.post("/persist")
        assert (ann / "000000.clicks.txt").exists()
        assert (ann / "000000.labels.txt").exists()
        # no stray temp files from the atomic write
        assert sorted(p.name for p in ann.iterdir()) == [
            "000000.clicks.txt", "000000.labels.txt"]

        # a fresh app on the same directory resumes the session
        app2 = create_app(str(data_root), annotations_dir=str(ann))
        c2 = TestClient(app2)
        got = c2.get("/scenes/000000/annotations").json()
        assert got["clicks"] == [{"cls": "Car", "x": 3.0, "z": 20.0}]
        assert len(got["cuboids"]) == 1
        assert got["cuboids"][0]["cz"] == pytest.approx(20.0, abs=1e-3)
        assert got["cuboids"][0]["theta"] == pytest.approx(0.2, abs=1e-3)
        assert got["cuboids"][0]["confidence"] == pytest.approx(0.7, abs=1e-3)


class TestActiveMode:
    def test_active_click_contract(self, data_root, checkpoint, tmp_path):
        app = create_app(str(data_root), checkpoint=str(checkpoint),
                         annotations_dir=str(tmp_path / "ann"))
        c = TestClient(app)
        scene = load_dataset(data_root, limit=1)[0]
        gt = scene.cuboids[0]
        r = c.post("/scenes/000000/clicks",
                   json={"x": gt.cx, "z": gt.cz, "mode": "active"})
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert len(body["candidates"]) == 25
        assert set(body["cuboid"]) == {"cx", "cy", "cz", "h", "w", "l", "theta"}
        assert len(body["bev_corners"]) == 4
        # candidate grid straddles the click at 0.1 m spacing
        xs = sorted({round(p["x"] - gt.cx, 6) for p in body["candidates"]})
        assert xs == pytest.approx([-0.2, -0.1, 0.0, 0.1, 0.2])

    def test_active_click_no_points(self, data_root, checkpoint, tmp_path):
        app = create_app(str(data_root), checkpoint=str(checkpoint),
                         annotations_dir=str(tmp_path / "ann"))
        c = TestClient(app)
        r = c.post("/scenes/000000/clicks",
                   json={"x": 39.0, "z": 69.0, "mode": "active"})
        assert r.status_code == 200
        assert r.json()["status"] == "no-points"
