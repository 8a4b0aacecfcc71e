"""Command-line entry point: reproducible anchor, detection, and evaluation runs.

Every run writes its effective configuration to ``<out>/run.json``; feeding
that file back via ``--config`` reproduces the outputs byte-identically.
Explicit flags override config-file values, which override built-in defaults.

Exit codes: 0 success, 2 usage/input error, 3 partial-data warning,
1 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import anchors as anchors_mod
from . import dataset as dataset_mod
from . import evaluation as eval_mod
from .errors import InputError, ToolkitError
from .geometry import PIXEL_NETWORK, PIXEL_ORIGINAL, Box, LetterboxMap, letterbox_forward
from .head import HeadSpec
from .inference import PlantedObject, TensorDirBackbone, ToyBackbone
from .pipeline import PhaseConfig, RunDescription, run_phase1, run_phase2
from .postprocess import Detection, Phase, PostprocessConfig, format_detection_line, parse_detection_line

log = logging.getLogger("wbcdetect")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PARTIAL = 3
EXIT_INTERNAL = 1

_DEFAULTS = {
    "anchors": {
        "annotations": None,
        "k": 9,
        "input_size": 416,
        "distance": "iou",
        "seed": 0,
        "out": "out",
    },
    "detect": {
        "phase": 2,
        "backbone": "toy",
        "tensor_dir": None,
        "anchors": None,
        "conf": 0.20,
        "nms": 0.45,
        "manifest": None,
        "input_size": 416,
        "toy_plants": None,
        "seed": 0,
        "out": "out",
    },
    "eval": {
        "mode": "detection",
        "preds": None,
        "truth": None,
        "conf": 0.20,
        "iou": 0.40,
        "sample": None,
        "seed": 0,
        "out": "out",
    },
}


def _atomic_write(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, bytes):
        tmp.write_bytes(data)
    else:
        tmp.write_text(data)
    os.replace(tmp, path)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wbcdetect",
        description="White blood cell detection toolkit: anchors, detection runs, evaluation.",
    )
    parser.add_argument("--config", help="JSON config (e.g. a previous run.json)")
    parser.add_argument("--log-level", default="WARNING", help="logging level name")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("anchors", help="cluster annotation boxes into anchor priors")
    p.add_argument("--annotations", help="directory of VOC XML files")
    p.add_argument("--k", type=int)
    p.add_argument("--input-size", type=int, dest="input_size")
    p.add_argument("--distance", choices=["iou", "euclid"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("detect", help="run one pipeline phase over a manifest")
    p.add_argument("--phase", type=int, choices=[1, 2])
    p.add_argument("--backbone", choices=["toy", "tensors"])
    p.add_argument("--tensor-dir", dest="tensor_dir", help=".wbct files, one per image")
    p.add_argument("--anchors", help="anchor file from the anchors subcommand")
    p.add_argument("--conf", type=float, help="confidence threshold")
    p.add_argument("--nms", type=float, help="NMS IoU threshold")
    p.add_argument("--manifest", help="JSONL manifest of images to process")
    p.add_argument("--input-size", type=int, dest="input_size")
    p.add_argument("--toy-plants", dest="toy_plants", help="JSON plant fixture for the toy backbone")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("eval", help="score a detections file against ground truth")
    p.add_argument("--mode", choices=["classification", "detection"])
    p.add_argument("--preds", help="detections text file")
    p.add_argument("--truth", help="JSONL truth manifest")
    p.add_argument("--conf", type=float, help="confidence threshold for matching")
    p.add_argument("--iou", type=float, help="IoU threshold for matching")
    p.add_argument("--sample", type=int, help="balanced sample size (detection mode)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    return parser


def _effective_config(subcommand: str, args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS[subcommand])
    if args.config:
        loaded = json.loads(Path(args.config).read_text())
        if loaded.get("subcommand") not in (None, subcommand):
            raise InputError(
                f"config is for {loaded.get('subcommand')!r}, not {subcommand!r}"
            )
        for k, v in loaded.items():
            if k in cfg:
                cfg[k] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _require(cfg: dict, key: str, flag: str):
    if cfg[key] is None:
        raise InputError(f"missing required {flag}")
    return cfg[key]


def _write_run_echo(out_dir: Path, subcommand: str, cfg: dict) -> None:
    doc = {"subcommand": subcommand, **cfg}
    _atomic_write(out_dir / "run.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _cmd_anchors(cfg: dict) -> int:
    ann_dir = Path(_require(cfg, "annotations", "--annotations"))
    if not ann_dir.is_dir():
        raise InputError(f"{ann_dir} is not a directory")
    dims = []
    skipped = 0
    for xml_path in sorted(ann_dir.glob("*.xml")):
        try:
            ann = dataset_mod.parse_voc(xml_path.read_bytes())
        except InputError as e:
            log.warning("skipping %s: %s", xml_path.name, e)
            skipped += 1
            continue
        m = LetterboxMap.fit(ann.image_w, ann.image_h, cfg["input_size"])
        for _, box in ann.objects:
            dims.append((box.w * m.scale, box.h * m.scale))
    if not dims:
        raise InputError(f"no usable boxes under {ann_dir}")

    result = anchors_mod.cluster_anchors(
        dims,
        anchors_mod.AnchorConfig(k=cfg["k"], seed=cfg["seed"], distance=cfg["distance"]),
    )
    text = anchors_mod.format_anchor_file(
        result, cfg["input_size"], cfg["seed"], source=str(ann_dir)
    )
    out_dir = Path(cfg["out"])
    _atomic_write(out_dir / "anchors.txt", text)
    _write_run_echo(out_dir, "anchors", cfg)
    if skipped:
        log.warning("skipped %d unparsable annotation file(s)", skipped)
    return EXIT_OK


def _load_plants(path: str, manifest, input_size: int) -> list[PlantedObject]:
    dims_by_id = {e.image_id: (e.image_w, e.image_h) for e in manifest.entries}
    plants = []
    for rec in json.loads(Path(path).read_text()):
        frame = rec.get("frame", "original")
        box = Box(
            float(rec["cx"]),
            float(rec["cy"]),
            float(rec["w"]),
            float(rec["h"]),
            PIXEL_ORIGINAL if frame == "original" else PIXEL_NETWORK,
        )
        if frame == "original":
            if rec["image_id"] not in dims_by_id:
                raise InputError(f"plant references unknown image {rec['image_id']!r}")
            w, h = dims_by_id[rec["image_id"]]
            box = letterbox_forward(LetterboxMap.fit(w, h, input_size), box)
        plants.append(
            PlantedObject(
                image_id=rec["image_id"],
                box=box,
                class_id=int(rec.get("class_id", 0)),
                objectness=float(rec.get("objectness", 0.98)),
                class_score=float(rec.get("class_score", 0.95)),
            )
        )
    return plants


def _cmd_detect(cfg: dict) -> int:
    manifest = dataset_mod.load_manifest(_require(cfg, "manifest", "--manifest"))
    phase = Phase.PHASE1 if cfg["phase"] == 1 else Phase.PHASE2
    num_classes = 1 if phase is Phase.PHASE1 else 4
    anchor_tuple = ()
    if cfg["anchors"]:
        anchor_tuple = anchors_mod.parse_anchor_file(Path(cfg["anchors"]).read_text())
        anchor_tuple = anchors_mod.flatten_scale_groups(
            anchors_mod.assign_to_scales(anchor_tuple)
        )
    spec = HeadSpec(num_classes=num_classes, input_size=cfg["input_size"], anchors=anchor_tuple)

    if cfg["backbone"] == "toy":
        plants = (
            _load_plants(cfg["toy_plants"], manifest, cfg["input_size"])
            if cfg["toy_plants"]
            else []
        )
        backbone = ToyBackbone(seed=cfg["seed"], plants=plants)
    else:
        backbone = TensorDirBackbone(_require(cfg, "tensor_dir", "--tensor-dir"))

    pcfg = PhaseConfig(
        phase=phase,
        head_spec=spec,
        postprocess=PostprocessConfig(cfg["conf"], cfg["nms"]),
        backbone=backbone,
    )

    lines: list[str] = []
    overlay: dict = {}
    entries_by_id = {e.image_id: e for e in manifest.entries}
    if phase is Phase.PHASE1:
        out = run_phase1(manifest, pcfg)
        skipped = out.skipped
        for image_id, pairs in out.boxes.items():
            entry = entries_by_id[image_id]
            items = []
            for box, conf in pairs:
                d = Detection(box, 0, "WBC", conf, conf, Phase.PHASE1)
                lines.append(format_detection_line(image_id, d))
                x1, y1, x2, y2 = box.to_corners()
                items.append(
                    {
                        "class_name": "WBC",
                        "confidence": round(conf, 4),
                        "box": [round(x1), round(y1), round(x2), round(y2)],
                    }
                )
            overlay[image_id] = {"dims": [entry.image_w, entry.image_h], "detections": items}
    else:
        out = run_phase2(manifest, pcfg)
        skipped = out.skipped
        for image_id, anchored in out.detections.items():
            entry = entries_by_id[image_id]
            items = []
            for a in anchored:
                d = a.detection
                lines.append(format_detection_line(image_id, d))
                x1, y1, x2, y2 = d.box.to_corners()
                items.append(
                    {
                        "class_name": d.class_name,
                        "confidence": round(d.confidence, 4),
                        "box": [round(x1), round(y1), round(x2), round(y2)],
                        "phase1_box_index": a.phase1_box_index,
                    }
                )
            overlay[image_id] = {"dims": [entry.image_w, entry.image_h], "detections": items}

    description = RunDescription(
        phase=cfg["phase"],
        input_size=spec.input_size,
        num_classes=spec.num_classes,
        boxes_per_cell=spec.boxes_per_cell,
        strides=spec.strides,
        anchors=tuple((a.pw, a.ph) for a in spec.anchors),
        conf_threshold=cfg["conf"],
        nms_iou_threshold=cfg["nms"],
        seed=cfg["seed"],
        backbone=cfg["backbone"],
        manifest_path=cfg["manifest"],
        output_dir=cfg["out"],
    )
    out_dir = Path(cfg["out"])
    _atomic_write(out_dir / "detections.txt", "\n".join(lines) + ("\n" if lines else ""))
    _atomic_write(
        out_dir / "overlay.json",
        json.dumps(
            {"config": cfg, "pipeline": description.to_dict(), "images": overlay},
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    _atomic_write(out_dir / "pipeline_run.json", description.to_json())
    _write_run_echo(out_dir, "detect", cfg)

    for image_id, reason in skipped:
        log.warning("skipped %s: %s", image_id, reason)
    if skipped and len(skipped) == len(manifest.entries):
        print(f"error: all {len(skipped)} image(s) failed", file=sys.stderr)
        return EXIT_INPUT
    if skipped:
        return EXIT_PARTIAL
    return EXIT_OK


def _truth_vocabulary(manifest) -> dataset_mod.ClassVocabulary:
    names = set()
    for e in manifest.entries:
        if e.class_name:
            names.add(e.class_name)
        if e.annotation:
            names.update(n for n, _ in e.annotation.objects)
    if not names:
        raise InputError("truth manifest names no classes")
    return dataset_mod.ClassVocabulary(tuple(sorted(names)))


def _cmd_eval(cfg: dict) -> int:
    manifest = dataset_mod.load_manifest(_require(cfg, "truth", "--truth"))
    vocab = _truth_vocabulary(manifest)
    known_ids = {e.image_id for e in manifest.entries}

    preds_by_image: dict[str, list[Detection]] = {}
    unknown: list[str] = []
    total_records = 0
    preds_path = Path(_require(cfg, "preds", "--preds"))
    for line in preds_path.read_text().splitlines():
        if not line.strip():
            continue
        total_records += 1
        image_id, det = parse_detection_line(line, vocab.names)
        if image_id not in known_ids:
            unknown.append(image_id)
            continue
        preds_by_image.setdefault(image_id, []).append(det)

    rule = eval_mod.MatchRule(conf_min=cfg["conf"], iou_min=cfg["iou"])
    counts = {name: eval_mod.ConfusionCounts() for name in vocab}
    warnings = list(
        f"excluded prediction for unknown image {i}" for i in sorted(set(unknown))
    )

    if cfg["mode"] == "classification":
        samples = []
        for e in manifest.entries:
            if e.class_name is None:
                warnings.append(f"entry {e.image_id} has no class label; skipped")
                continue
            eligible = [
                d for d in preds_by_image.get(e.image_id, []) if d.confidence > rule.conf_min
            ]
            samples.append((vocab.id_of(e.class_name), eval_mod.classify_image(eligible)))
        counts = eval_mod.aggregate_classification(samples, vocab)
        support = None
    else:
        entries = manifest.entries
        if cfg["sample"]:
            entries = dataset_mod.sample_detection_testset(manifest, cfg["sample"], cfg["seed"])
        support = {name: 0 for name in vocab}
        for e in entries:
            if e.annotation is None:
                warnings.append(f"entry {e.image_id} has no boxes; skipped")
                continue
            truths = list(e.annotation.objects)
            for name, _ in truths:
                support[name] = support.get(name, 0) + 1
            for name, c in eval_mod.match_detections(
                preds_by_image.get(e.image_id, []), truths, rule
            ).items():
                counts[name] = counts.get(name, eval_mod.ConfusionCounts()) + c

    echo = {"subcommand": "eval", **cfg}
    report = eval_mod.build_report(counts, cfg["mode"], vocab, config_echo=echo, support=support)

    out_dir = Path(cfg["out"])
    _atomic_write(out_dir / "report.csv", report.to_csv())
    _atomic_write(out_dir / "report.json", report.to_json())
    _write_run_echo(out_dir, "eval", cfg)

    for w in warnings:
        log.warning("%s", w)
    if total_records and len(unknown) / total_records > 0.01:
        print(
            f"warning: {len(unknown)}/{total_records} prediction(s) referenced "
            "unknown images",
            file=sys.stderr,
        )
        return EXIT_PARTIAL
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        cfg = _effective_config(args.subcommand, args)
        if args.subcommand == "anchors":
            return _cmd_anchors(cfg)
        if args.subcommand == "detect":
            return _cmd_detect(cfg)
        return _cmd_eval(cfg)
    except (InputError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ToolkitError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
