"""Two-phase orchestration.

Phase 1 runs the single-class head to localize white blood cells; its boxes
become supervision regions for the subtype stage.  Phase 2 runs the
four-class head over the full image and links each detection back to the
phase-1 region it overlaps best (IoU > 0.5), or flags it unanchored.

Per-image failures (missing tensor file, corrupt data) are recorded and
skipped so one bad image cannot abort a run; results are keyed and ordered
by image_id regardless of execution order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

from .dataset import (
    PHASE1_CLASSES,
    PHASE2_CLASSES,
    Annotation,
    ClassVocabulary,
    DatasetManifest,
    ManifestEntry,
    Split,
)
from .errors import ConfigError, ToolkitError
from .geometry import Box, LetterboxMap, iou
from .head import HeadSpec, decode_grid
from .inference import BackboneAdapter
from .postprocess import (
    Detection,
    Phase,
    PostprocessConfig,
    nms,
    score_and_filter,
    to_original_frame,
)

_PHASE_DEPTH = {Phase.PHASE1: 18, Phase.PHASE2: 27}


@dataclass(frozen=True)
class PhaseConfig:
    """One stage of the pipeline: head layout, thresholds, backbone."""

    phase: Phase
    head_spec: HeadSpec
    postprocess: PostprocessConfig
    backbone: BackboneAdapter
    vocabulary: ClassVocabulary | None = None

    def __post_init__(self):
        want = _PHASE_DEPTH[self.phase]
        if self.head_spec.depth != want:
            raise ConfigError(
                f"{self.phase.name} requires head depth {want}, got {self.head_spec.depth}"
            )
        vocab = self.vocabulary
        if vocab is None:
            vocab = PHASE1_CLASSES if self.phase is Phase.PHASE1 else PHASE2_CLASSES
            object.__setattr__(self, "vocabulary", vocab)
        if len(vocab) != self.head_spec.num_classes:
            raise ConfigError(
                f"{len(vocab)} class names vs {self.head_spec.num_classes} head classes"
            )


@dataclass(frozen=True)
class Phase1Output:
    """Per-image WBC regions: (box, confidence) pairs in original pixels."""

    boxes: dict[str, list[tuple[Box, float]]]
    skipped: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class AnchoredDetection:
    """A phase-2 detection plus the index of its phase-1 region, if any."""

    detection: Detection
    phase1_box_index: int | None

    @property
    def unanchored(self) -> bool:
        return self.phase1_box_index is None


@dataclass(frozen=True)
class PipelineResult:
    detections: dict[str, list[AnchoredDetection]]
    skipped: tuple[tuple[str, str], ...] = ()


def _detect_one(entry: ManifestEntry, cfg: PhaseConfig) -> list[Detection]:
    tensors = cfg.backbone.infer(entry.image_id, cfg.head_spec)
    raw = []
    for t in tensors:
        raw.extend(decode_grid(t, cfg.head_spec))
    dets = score_and_filter(raw, cfg.postprocess, cfg.vocabulary.names, cfg.phase)
    dets = nms(dets, cfg.postprocess)
    m = LetterboxMap.fit(entry.image_w, entry.image_h, cfg.head_spec.input_size)
    return to_original_frame(dets, m)


def run_phase1(manifest: DatasetManifest, cfg: PhaseConfig) -> Phase1Output:
    """Localize WBCs on every manifest image."""
    if cfg.phase is not Phase.PHASE1:
        raise ConfigError(f"run_phase1 got a {cfg.phase.name} config")
    boxes: dict[str, list[tuple[Box, float]]] = {}
    skipped: list[tuple[str, str]] = []
    for entry in sorted(manifest.entries, key=lambda e: e.image_id):
        try:
            dets = _detect_one(entry, cfg)
        except (ToolkitError, OSError) as e:
            skipped.append((entry.image_id, str(e)))
            continue
        boxes[entry.image_id] = [(d.box, d.confidence) for d in dets]
    return Phase1Output(boxes, tuple(skipped))


def make_phase2_trainset(
    phase1: Phase1Output,
    class_labels: Mapping[str, str],
    source: DatasetManifest,
) -> DatasetManifest:
    """Pair every phase-1 box with its image's subtype label.

    The classification corpus labels whole images, so multiple boxes on one
    image all inherit the image label; how often that fan-out happened, and
    which images were dropped for having no boxes or no label, is recorded in
    the manifest warnings.
    """
    entries_by_id = {e.image_id: e for e in source.entries}
    out: list[ManifestEntry] = []
    no_boxes: list[str] = []
    no_label: list[str] = []
    fanned_out = 0
    for image_id, pairs in phase1.boxes.items():
        if not pairs:
            no_boxes.append(image_id)
            continue
        label = class_labels.get(image_id)
        if label is None:
            no_label.append(image_id)
            continue
        if len(pairs) > 1:
            fanned_out += 1
        src = entries_by_id.get(image_id)
        w = src.image_w if src else 320
        h = src.image_h if src else 240
        path = src.path if src else ""
        annotation = Annotation(image_id, w, h, tuple((label, box) for box, _ in pairs))
        out.append(ManifestEntry(image_id, path, label, w, h, annotation))

    warnings = []
    if no_boxes:
        warnings.append(
            f"excluded {len(no_boxes)} image(s) with zero phase-1 boxes: "
            + ",".join(sorted(no_boxes))
        )
    if no_label:
        warnings.append(
            f"excluded {len(no_label)} image(s) with no subtype label: "
            + ",".join(sorted(no_label))
        )
    if fanned_out:
        warnings.append(f"{fanned_out} image(s) fanned one label out to multiple boxes")
    out.sort(key=lambda e: e.image_id)
    return DatasetManifest(Split.TRAIN, tuple(out), tuple(warnings))


def run_phase2(
    manifest: DatasetManifest,
    cfg: PhaseConfig,
    phase1: Phase1Output | None = None,
) -> PipelineResult:
    """Detect and classify subtypes; link detections to phase-1 regions.

    Without a phase-1 output the stage runs standalone and every detection is
    unanchored.
    """
    if cfg.phase is not Phase.PHASE2:
        raise ConfigError(f"run_phase2 got a {cfg.phase.name} config")
    results: dict[str, list[AnchoredDetection]] = {}
    skipped: list[tuple[str, str]] = []
    for entry in sorted(manifest.entries, key=lambda e: e.image_id):
        try:
            dets = _detect_one(entry, cfg)
        except (ToolkitError, OSError) as e:
            skipped.append((entry.image_id, str(e)))
            continue
        regions = phase1.boxes.get(entry.image_id, []) if phase1 else []
        linked = []
        for d in dets:
            best_idx = None
            best_iou = 0.5
            for i, (region, _) in enumerate(regions):
                v = iou(d.box, region)
                if v > best_iou:
                    best_iou = v
                    best_idx = i
            linked.append(AnchoredDetection(d, best_idx))
        results[entry.image_id] = linked
    return PipelineResult(results, tuple(skipped))


@dataclass(frozen=True)
class RunDescription:
    """Everything needed to reproduce a run; embedded in every report."""

    phase: int
    input_size: int
    num_classes: int
    boxes_per_cell: int
    strides: tuple[int, ...]
    anchors: tuple[tuple[float, float], ...]
    conf_threshold: float
    nms_iou_threshold: float
    seed: int
    backbone: str
    manifest_path: str
    output_dir: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "input_size": self.input_size,
            "num_classes": self.num_classes,
            "boxes_per_cell": self.boxes_per_cell,
            "strides": list(self.strides),
            "anchors": [list(a) for a in self.anchors],
            "conf_threshold": self.conf_threshold,
            "nms_iou_threshold": self.nms_iou_threshold,
            "seed": self.seed,
            "backbone": self.backbone,
            "manifest_path": self.manifest_path,
            "output_dir": self.output_dir,
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunDescription":
        return cls(
            phase=int(d["phase"]),
            input_size=int(d["input_size"]),
            num_classes=int(d["num_classes"]),
            boxes_per_cell=int(d["boxes_per_cell"]),
            strides=tuple(int(s) for s in d["strides"]),
            anchors=tuple((float(a[0]), float(a[1])) for a in d["anchors"]),
            conf_threshold=float(d["conf_threshold"]),
            nms_iou_threshold=float(d["nms_iou_threshold"]),
            seed=int(d["seed"]),
            backbone=str(d["backbone"]),
            manifest_path=str(d["manifest_path"]),
            output_dir=str(d["output_dir"]),
            extra=dict(d.get("extra", {})),
        )
