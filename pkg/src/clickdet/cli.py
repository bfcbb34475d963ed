"""Command-line entry point.

Verbs: synth, train-stage1, train-stage2, infer, annotate-auto, eval, serve.
Flags may also come from a key=value config file via --config; explicit flags
win on conflict. Set CLICKDET_LOG=debug for verbose logging.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

log = logging.getLogger("clickdet")


def _setup_logging():
    level = os.environ.get("CLICKDET_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser):
    if not getattr(args, "config", None):
        return
    defaults = {}
    for lineno, line in enumerate(Path(args.config).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            parser.error(f"config line {lineno}: expected key=value")
        key, val = line.split("=", 1)
        defaults[key.strip().replace("-", "_")] = val.strip()
    sub = getattr(args, "_subparser", parser)
    for key, val in defaults.items():
        if hasattr(args, key) and sub.get_default(key) == getattr(args, key):
            current = getattr(args, key)
            cast = type(current) if current is not None else str
            setattr(args, key, cast(val) if cast is not bool else val.lower() == "true")


def cmd_synth(args) -> int:
    from .synthgen import SynthConfig, write_dataset
    cfg = SynthConfig(seed=args.seed, num_scenes=args.scenes)
    write_dataset(cfg, args.out)
    log.info("wrote %d scenes to %s", args.scenes, args.out)
    return 0


def cmd_train_stage1(args) -> int:
    from .dataset import load_dataset
    from .detector import PROFILES, LossConfig, preset, save_checkpoint, train_stage1
    s1_cfg, _, train_cfg = preset(args.preset, args.seed)
    if args.iterations is not None:
        train_cfg = replace(train_cfg, stage1_iterations=args.iterations)
    if args.batch is not None:
        train_cfg = replace(train_cfg, stage1_batch=args.batch)
    profile = PROFILES[args.cls]
    dataset = load_dataset(args.scenes, args.clicks, with_labels=False,
                           cls=profile.name)
    if not dataset:
        log.error("no scenes found under %s", args.scenes)
        return 1
    net, losses = train_stage1(dataset, s1_cfg, LossConfig(), train_cfg, profile)
    save_checkpoint(args.out, net, None, None, profile, args.preset)
    losses.write(str(args.out) + ".losses")
    log.info("stage-1 checkpoint written to %s", args.out)
    return 0


def cmd_train_stage2(args) -> int:
    from .dataset import load_dataset
    from .detector import (PROFILES, LossConfig, load_checkpoint, preset,
                           save_checkpoint, train_stage2)
    _, s2_cfg, train_cfg = preset(args.preset, args.seed)
    if args.iterations is not None:
        train_cfg = replace(train_cfg, stage2_iterations=args.iterations)
    if args.batch is not None:
        train_cfg = replace(train_cfg, stage2_batch=args.batch)
    profile = PROFILES[args.cls]
    s1_net, _, _, ckpt_profile, _ = load_checkpoint(args.stage1)
    if s1_net is None:
        log.error("%s contains no stage-1 network", args.stage1)
        return 1
    dataset = load_dataset(args.scenes, args.clicks, with_labels=True,
                           cls=profile.name,
                           precise_fraction=args.precise_fraction,
                           seed=args.seed)
    init_net, refine_net, losses = train_stage2(
        dataset, s1_net, s2_cfg, LossConfig(), train_cfg, profile)
    save_checkpoint(args.out, s1_net, init_net, refine_net, profile, args.preset)
    losses.write(str(args.out) + ".losses")
    log.info("stage-2 checkpoint written to %s", args.out)
    return 0


def _load_full_checkpoint(path):
    from .detector import load_checkpoint
    s1_net, init_net, refine_net, profile, preset_name = load_checkpoint(path)
    if s1_net is None or init_net is None or refine_net is None:
        raise SystemExit(f"{path} is not a full detector checkpoint")
    return s1_net, init_net, refine_net, profile


def cmd_infer(args) -> int:
    from .dataset import load_scene, scene_ids
    from .detector import infer_scene
    from .kitti_io import CalibRecord, parse_calib, write_predictions
    s1_net, init_net, refine_net, profile = _load_full_checkpoint(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for stem in scene_ids(args.scenes):
        sample = load_scene(args.scenes, stem, with_labels=False, cls=profile.name)
        results = infer_scene(sample.cloud, s1_net, init_net, refine_net,
                              profile, seed=args.seed)
        calib_path = Path(args.scenes) / "calib" / f"{stem}.txt"
        calib = (parse_calib(calib_path.read_text()) if calib_path.exists()
                 else CalibRecord.identity())
        text = write_predictions([c for c, _ in results],
                                 [s for _, s in results], calib, profile.name)
        (out / f"{stem}.txt").write_text(text)
        log.info("scene %s: %d detections", stem, len(results))
    return 0


def cmd_annotate_auto(args) -> int:
    # automatic mode: model predictions become pseudo annotations
    return cmd_infer(args)


def cmd_eval(args) -> int:
    from .dataset import scene_ids
    from .evalkit import (Detection, GroundTruth, assign_difficulty_synthetic,
                          evaluate_table, format_table, gt_from_label,
                          machine_records)
    from .kitti_io import parse_labels, to_cuboid
    dets: list[Detection] = []
    gts: list[GroundTruth] = []
    gt_root = Path(args.gt)
    label_dir = gt_root / "label_2" if (gt_root / "label_2").is_dir() else gt_root
    counts_dir = gt_root / "counts"
    for path in sorted(label_dir.glob("*.txt")):
        stem = path.stem
        recs = [r for r in parse_labels(path.read_text())
                if r.cls in (args.cls.capitalize(), "DontCare")]
        counts_path = counts_dir / f"{stem}.txt"
        counts = ([int(v) for v in counts_path.read_text().split()]
                  if counts_path.exists() else None)
        kept = 0
        for r in recs:
            if r.cls == "DontCare" or counts is None:
                gts.append(gt_from_label(r, stem))
            else:
                gts.append(GroundTruth(to_cuboid(r), stem,
                                       assign_difficulty_synthetic(counts[kept])))
                kept += 1
        pred_path = Path(args.pred) / f"{stem}.txt"
        if pred_path.exists():
            for r in parse_labels(pred_path.read_text()):
                if r.cls != args.cls.capitalize():
                    continue
                dets.append(Detection(to_cuboid(r), r.score or 0.0, stem))
    table = evaluate_table(dets, gts, args.iou, args.ap_protocol)
    sys.stdout.write(format_table(table, args.iou))
    if args.records:
        Path(args.records).write_text(machine_records(table, args.iou))
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app
    app = create_app(args.scenes, args.model, args.annotations)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clickdet")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate a synthetic KITTI-format dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-stage1")
    p.add_argument("--scenes", required=True)
    p.add_argument("--clicks", default=None)
    p.add_argument("--preset", default="desk", choices=["desk", "full"])
    p.add_argument("--cls", default="car", choices=["car", "pedestrian"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=None,
                   help="override the preset's stage-1 iteration count")
    p.add_argument("--batch", type=int, default=None,
                   help="override the preset's stage-1 batch size")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_train_stage1, _subparser=p)

    p = sub.add_parser("train-stage2")
    p.add_argument("--scenes", required=True)
    p.add_argument("--clicks", default=None)
    p.add_argument("--stage1", required=True)
    p.add_argument("--preset", default="desk", choices=["desk", "full"])
    p.add_argument("--cls", default="car", choices=["car", "pedestrian"])
    p.add_argument("--precise-fraction", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=None,
                   help="override the preset's stage-2 iteration count")
    p.add_argument("--batch", type=int, default=None,
                   help="override the preset's stage-2 batch size")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_train_stage2, _subparser=p)

    for verb, fn in (("infer", cmd_infer), ("annotate-auto", cmd_annotate_auto)):
        p = sub.add_parser(verb)
        p.add_argument("--scenes", required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("eval")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--cls", default="car")
    p.add_argument("--iou", type=float, default=0.7)
    p.add_argument("--ap-protocol", default="11", choices=["11", "40"])
    p.add_argument("--records", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve")
    p.add_argument("--scenes", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--annotations", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    _apply_config_file(args, parser)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
