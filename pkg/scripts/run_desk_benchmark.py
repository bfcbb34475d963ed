"""End-to-end desk benchmark: synthesize, train both stages, evaluate AP.

Trains the desk preset on synthetic scenes with noisy clicks and a 25%
subset of precise instances, then reports BEV and 3D AP at IoU 0.5 on
held-out scenes. Mirrors the release acceptance run; use --train/--test to
shrink it for a quick sanity pass.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from clickdet.dataset import load_dataset, load_scene, scene_ids
from clickdet.detector.config import CAR_PROFILE, LossConfig, preset
from clickdet.detector.inference import infer_scene
from clickdet.detector.train import save_checkpoint, train_stage1, train_stage2
from clickdet.evalkit import (Detection, GroundTruth,
                              assign_difficulty_synthetic, evaluate_table,
                              format_table)
from clickdet.synthgen import SynthConfig, write_dataset


def run_benchmark(train_scenes: int = 200, test_scenes: int = 50,
                  seed: int = 0, precise_fraction: float = 0.25,
                  workdir: str | None = None, verbose: bool = True):
    out = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="deskbench-"))
    out.mkdir(parents=True, exist_ok=True)
    data_dir = out / "data"
    t0 = time.time()

    def say(msg: str):
        if verbose:
            print(f"[{time.time() - t0:7.1f}s] {msg}", flush=True)

    total = train_scenes + test_scenes
    if not (data_dir / "velodyne").is_dir() or \
            len(scene_ids(data_dir)) != total:
        say(f"synthesizing {total} scenes")
        write_dataset(SynthConfig(seed=seed, num_scenes=total), data_dir)

    stems = scene_ids(data_dir)
    train_stems, test_stems = stems[:train_scenes], stems[train_scenes:]

    s1_cfg, s2_cfg, train_cfg = preset("desk", seed=seed)
    say("loading training scenes")
    weak = load_dataset(data_dir, with_labels=False, limit=train_scenes)
    precise = load_dataset(data_dir, precise_fraction=precise_fraction,
                           seed=seed, limit=train_scenes)

    say(f"training stage 1 ({train_cfg.stage1_iterations} iters)")
    s1_net, log1 = train_stage1(weak, s1_cfg, LossConfig(), train_cfg,
                                CAR_PROFILE)
    (out / "stage1.losses").write_text("".join(log1.lines))

    say(f"training stage 2 ({train_cfg.stage2_iterations} iters)")
    init_net, refine_net, log2 = train_stage2(precise, s1_net, s2_cfg,
                                              LossConfig(), train_cfg,
                                              CAR_PROFILE)
    (out / "stage2.losses").write_text("".join(log2.lines))
    save_checkpoint(out / "model.ckpt", s1_net, init_net, refine_net,
                    CAR_PROFILE, "desk")

    say(f"inference on {len(test_stems)} held-out scenes")
    dets: list[Detection] = []
    gts: list[GroundTruth] = []
    for stem in test_stems:
        sample = load_scene(data_dir, stem)
        counts = [int(v) for v in
                  (data_dir / "counts" / f"{stem}.txt").read_text().split()]
        for cub, n in zip(sample.cuboids, counts):
            gts.append(GroundTruth(cub, stem, assign_difficulty_synthetic(n)))
        for cub, conf in infer_scene(sample.cloud, s1_net, init_net,
                                     refine_net, CAR_PROFILE, seed=seed):
            dets.append(Detection(cub, conf, stem))

    table = evaluate_table(dets, gts, iou_threshold=0.5)
    say("done")
    report = {
        "train_scenes": train_scenes,
        "test_scenes": test_scenes,
        "seed": seed,
        "bev_ap_moderate": table["bev"]["moderate"],
        "ap3d_moderate": table["3d"]["moderate"],
        "table": table,
        "wall_seconds": time.time() - t0,
        "num_detections": len(dets),
        "num_gts": len(gts),
    }
    (out / "report.json").write_text(json.dumps(report, indent=2))
    if verbose:
        print(format_table(table, 0.5))
        print(f"report: {out / 'report.json'}")
    return report, out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train", type=int, default=200)
    ap.add_argument("--test", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--precise-fraction", type=float, default=0.25)
    ap.add_argument("--workdir", default=None)
    args = ap.parse_args()
    report, _ = run_benchmark(args.train, args.test, args.seed,
                              args.precise_fraction, args.workdir)
    bev = report["bev_ap_moderate"]
    ap3d = report["ap3d_moderate"]
    print(f"BEV AP@0.5 (moderate): {bev}")
    print(f"3D  AP@0.5 (moderate): {ap3d}")
    ok = (bev or 0) >= 0.70 and (ap3d or 0) >= 0.60
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
