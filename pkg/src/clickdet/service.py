"""HTTP backend for the annotation UI.

JSON over HTTP; all coordinates are meters in the world (internal) frame.
Endpoints:
  GET    /scenes
  GET    /scenes/{id}/bev
  GET    /scenes/{id}/annotations
  POST   /scenes/{id}/clicks      {"x":.., "z":.., "mode":"active"|"record-only"}
  POST   /scenes/{id}/accept      {"cuboid": {cx,cy,cz,h,w,l,theta}, "confidence":..}
  DELETE /scenes/{id}/annotations/{k}
"""

from __future__ import annotations

import os
import tempfile
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .dataset import load_scene, scene_ids
from .geometry import Cuboid, PointCloud
from .kitti_io import (CalibRecord, ClickAnnotation, write_clicks,
                       write_predictions)


@dataclass(frozen=True)
class BevMapping:
    """Affine pixel <-> world map: world = origin + (pixel + 0.5) * scale."""
    width: int = 800    # pixels along x
    height: int = 704   # pixels along z
    meters_per_pixel: float = 0.1
    x_min: float = -40.0
    z_min: float = 0.0

    def world_to_pixel(self, x: float, z: float) -> tuple[int, int]:
        px = int(np.floor((x - self.x_min) / self.meters_per_pixel))
        pz = int(np.floor((z - self.z_min) / self.meters_per_pixel))
        return px, pz

    def pixel_to_world(self, px: float, pz: float) -> tuple[float, float]:
        return (self.x_min + (px + 0.5) * self.meters_per_pixel,
                self.z_min + (pz + 0.5) * self.meters_per_pixel)

    def contains(self, x: float, z: float) -> bool:
        return (self.x_min <= x < self.x_min + self.width * self.meters_per_pixel
                and self.z_min <= z < self.z_min + self.height * self.meters_per_pixel)


def rasterize_bev(cloud: PointCloud, mapping: BevMapping | None = None
                  ) -> dict:
    """Max-height and density channels over the BEV window, values in [0, 1]."""
    m = mapping or BevMapping()
    if len(cloud) == 0:
        raise ValueError("cannot rasterize an empty scene")
    px = np.floor((cloud.xyzi[:, 0] - m.x_min) / m.meters_per_pixel).astype(int)
    pz = np.floor((cloud.xyzi[:, 2] - m.z_min) / m.meters_per_pixel).astype(int)
    ok = (px >= 0) & (px < m.width) & (pz >= 0) & (pz < m.height)
    px, pz = px[ok], pz[ok]
    # y points down; height above ground = -(y - ground)
    height = np.clip((1.7 - cloud.xyzi[ok, 1]) / 3.0, 0.0, 1.0)
    max_h = np.zeros((m.height, m.width))
    np.maximum.at(max_h, (pz, px), height)
    density = np.zeros((m.height, m.width))
    np.add.at(density, (pz, px), 1.0)
    density = np.clip(density / 8.0, 0.0, 1.0)
    return {
        "width": m.width, "height": m.height,
        "meters_per_pixel": m.meters_per_pixel,
        "x_min": m.x_min, "z_min": m.z_min,
        "max_height": max_h.tolist(),
        "density": density.tolist(),
    }


@dataclass
class SceneState:
    clicks: list[dict] = field(default_factory=list)
    cuboids: list[dict] = field(default_factory=list)


class Session:
    """Annotation state for one dataset; mutation is single-writer locked."""

    def __init__(self, dataset_root: str, checkpoint: str | None,
                 annotations_dir: str | None):
        self.root = Path(dataset_root)
        self.ids = scene_ids(self.root)
        self.annotations_dir = Path(annotations_dir) if annotations_dir else \
            self.root / "annotations"
        self.lock = threading.Lock()
        self.scenes: dict[str, SceneState] = {}
        self.dirty = False
        self.s1_net = self.init_net = self.refine_net = None
        self.profile = None
        if checkpoint:
            from .detector import load_checkpoint
            self.s1_net, self.init_net, self.refine_net, self.profile, _ = \
                load_checkpoint(checkpoint)
        self._clouds: dict[str, PointCloud] = {}
        self._load_existing()

    def _load_existing(self):
        if not self.annotations_dir.is_dir():
            return
        from .kitti_io import parse_labels, read_clicks, to_cuboid
        for path in self.annotations_dir.glob("*.clicks.txt"):
            sid = path.name.split(".")[0]
            st = self.scenes.setdefault(sid, SceneState())
            st.clicks = [{"cls": c.cls, "x": c.x_o, "z": c.z_o}
                         for c in read_clicks(path.read_text())]
        for path in self.annotations_dir.glob("*.labels.txt"):
            sid = path.name.split(".")[0]
            st = self.scenes.setdefault(sid, SceneState())
            st.cuboids = [dict(asdict_cuboid(to_cuboid(r)), confidence=r.score or 1.0)
                          for r in parse_labels(path.read_text())]

    def cloud(self, sid: str) -> PointCloud:
        if sid not in self._clouds:
            if sid not in self.ids:
                raise KeyError(sid)
            self._clouds[sid] = load_scene(self.root, sid, with_labels=False).cloud
        return self._clouds[sid]

    def persist(self):
        """Atomic write of all dirty scene annotations (temp + rename)."""
        with self.lock:
            if not self.dirty:
                return
            self.annotations_dir.mkdir(parents=True, exist_ok=True)
            calib = CalibRecord.identity()
            for sid, st in self.scenes.items():
                if st.clicks:
                    clicks = [ClickAnnotation(c["cls"], c["x"], c["z"])
                              for c in st.clicks]
                    _atomic_write(self.annotations_dir / f"{sid}.clicks.txt",
                                  write_clicks(clicks))
                if st.cuboids:
                    cubs = [cuboid_from_dict(c) for c in st.cuboids]
                    confs = [float(c.get("confidence", 1.0)) for c in st.cuboids]
                    _atomic_write(self.annotations_dir / f"{sid}.labels.txt",
                                  write_predictions(cubs, confs, calib,
                                                    cls=(self.profile.name if self.profile
                                                         else "Car")))
            self.dirty = False


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def asdict_cuboid(c: Cuboid) -> dict:
    return {"cx": c.cx, "cy": c.cy, "cz": c.cz,
            "h": c.h, "w": c.w, "l": c.l, "theta": c.theta}


def cuboid_from_dict(d: dict) -> Cuboid:
    return Cuboid(d["cx"], d["cy"], d["cz"], d["h"], d["w"], d["l"], d["theta"])


class ClickRequest(BaseModel):
    x: float | None = None
    z: float | None = None
    px: int | None = None
    pz: int | None = None
    mode: str = "active"
    cls: str = "Car"


class AcceptRequest(BaseModel):
    cuboid: dict
    confidence: float = 1.0


def create_app(dataset_root: str, checkpoint: str | None = None,
               annotations_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="clickdet annotation service")
    session = Session(dataset_root, checkpoint, annotations_dir)
    mapping = BevMapping()
    app.state.session = session

    def _scene_or_404(sid: str):
        if sid not in session.ids:
            raise HTTPException(404, f"unknown scene {sid}")

    @app.get("/scenes")
    def list_scenes():
        return {"scenes": session.ids}

    @app.get("/scenes/{sid}/bev")
    def bev(sid: str):
        _scene_or_404(sid)
        return rasterize_bev(session.cloud(sid), mapping)

    @app.get("/scenes/{sid}/annotations")
    def annotations(sid: str):
        _scene_or_404(sid)
        st = session.scenes.get(sid, SceneState())
        return {"clicks": st.clicks, "cuboids": st.cuboids}

    @app.post("/scenes/{sid}/clicks")
    def click(sid: str, req: ClickRequest):
        _scene_or_404(sid)
        if req.x is not None and req.z is not None:
            x, z = req.x, req.z
        elif req.px is not None and req.pz is not None:
            x, z = mapping.pixel_to_world(req.px, req.pz)
        else:
            raise HTTPException(422, "click needs x/z or px/pz")
        if not mapping.contains(x, z):
            raise HTTPException(400, f"click ({x:.1f}, {z:.1f}) outside BEV window")
        with session.lock:
            st = session.scenes.setdefault(sid, SceneState())
            st.clicks.append({"cls": req.cls, "x": x, "z": z})
            session.dirty = True
        if req.mode == "record-only":
            return {"status": "recorded", "x": x, "z": z}
        if session.init_net is None or session.refine_net is None:
            raise HTTPException(409, "no stage-2 model loaded; record-only available")
        from .detector.inference import NoPointsError, active_annotate
        try:
            cub, conf, centers = active_annotate(
                session.cloud(sid), ClickAnnotation(req.cls, x, z),
                session.init_net, session.refine_net, session.profile)
        except NoPointsError:
            return {"status": "no-points", "x": x, "z": z}
        return {
            "status": "ok",
            "cuboid": asdict_cuboid(cub),
            "confidence": conf,
            "candidates": [{"x": cx, "z": cz} for cx, cz in centers],
            "bev_corners": cub.bev_corners().tolist(),
        }

    @app.post("/scenes/{sid}/accept")
    def accept(sid: str, req: AcceptRequest):
        _scene_or_404(sid)
        try:
            cub = cuboid_from_dict(req.cuboid)
        except (KeyError, ValueError) as e:
            raise HTTPException(422, f"bad cuboid: {e}")
        with session.lock:
            st = session.scenes.setdefault(sid, SceneState())
            st.cuboids.append(dict(asdict_cuboid(cub), confidence=req.confidence))
            session.dirty = True
        session_persist_soon(session)
        return {"status": "accepted", "index": len(st.cuboids) - 1}

    @app.delete("/scenes/{sid}/annotations/{k}")
    def delete(sid: str, k: int):
        _scene_or_404(sid)
        with session.lock:
            st = session.scenes.get(sid)
            if st is None or not 0 <= k < len(st.cuboids):
                raise HTTPException(404, f"no annotation {k} in scene {sid}")
            st.cuboids.pop(k)
            session.dirty = True
        session_persist_soon(session)
        return {"status": "deleted"}

    @app.post("/persist")
    def persist():
        session.persist()
        return {"status": "persisted"}

    return app


def session_persist_soon(session: Session):
    # synchronous persist keeps the atomicity contract simple
    session.persist()
