"""Candidate filtering: confidence scoring, per-class NMS, frame restoration.

The confidence of a detection is objectness times its best class probability;
that single scalar is what gets thresholded (default 0.20) and what orders
greedy suppression.  NMS runs per class so one subtype can never suppress
another.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .errors import ConfigError, FrameMismatchError
from .geometry import PIXEL_NETWORK, PIXEL_ORIGINAL, Box, LetterboxMap, iou, letterbox_backward
from .head import RawDetection


class Phase(enum.Enum):
    PHASE1 = 1
    PHASE2 = 2


@dataclass(frozen=True)
class Detection:
    """A final detection; provenance slots are kept when known so output
    ordering is reproducible."""

    box: Box
    class_id: int
    class_name: str
    confidence: float
    objectness: float
    source_phase: Phase
    scale_index: int | None = None
    cell: tuple[int, int] | None = None
    anchor_index: int | None = None


@dataclass(frozen=True)
class PostprocessConfig:
    conf_threshold: float = 0.20
    nms_iou_threshold: float = 0.45

    def __post_init__(self):
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ConfigError(f"conf_threshold outside [0,1]: {self.conf_threshold}")
        if not 0.0 <= self.nms_iou_threshold <= 1.0:
            raise ConfigError(f"nms_iou_threshold outside [0,1]: {self.nms_iou_threshold}")


def score_and_filter(
    raw: list[RawDetection],
    cfg: PostprocessConfig,
    class_names,
    source_phase: Phase | None = None,
) -> list[Detection]:
    """Assign each candidate its argmax class (ties to the lowest id) and keep
    those whose confidence clears the threshold."""
    class_names = tuple(class_names)
    if source_phase is None:
        source_phase = Phase.PHASE1 if len(class_names) == 1 else Phase.PHASE2
    out = []
    for r in raw:
        if len(r.class_probs) != len(class_names):
            raise ConfigError(
                f"{len(r.class_probs)} class scores vs {len(class_names)} class names"
            )
        best_id = 0
        best_p = r.class_probs[0]
        for i in range(1, len(r.class_probs)):
            if r.class_probs[i] > best_p:
                best_p = r.class_probs[i]
                best_id = i
        conf = r.objectness * best_p
        if conf >= cfg.conf_threshold:
            out.append(
                Detection(
                    box=r.box,
                    class_id=best_id,
                    class_name=class_names[best_id],
                    confidence=conf,
                    objectness=r.objectness,
                    source_phase=source_phase,
                    scale_index=r.scale_index,
                    cell=r.cell,
                    anchor_index=r.anchor_index,
                )
            )
    return out


def _slot_key(d: Detection, fallback: int):
    if d.scale_index is None or d.cell is None or d.anchor_index is None:
        return (1, fallback, 0, 0, 0)
    return (0, d.scale_index, d.cell[1], d.cell[0], d.anchor_index)


def nms(dets: list[Detection], cfg: PostprocessConfig) -> list[Detection]:
    """Greedy per-class suppression.

    Within a class, detections are visited in descending confidence (ties by
    slot order) and any box overlapping a kept same-class box with
    IoU > threshold is dropped.  Output is sorted by confidence descending,
    ties by (class_id, slot order); idempotent by construction.
    """
    indexed = list(enumerate(dets))
    kept: list[tuple[int, Detection]] = []
    for cls in sorted({d.class_id for d in dets}):
        group = [(i, d) for i, d in indexed if d.class_id == cls]
        group.sort(key=lambda p: (-p[1].confidence, _slot_key(p[1], p[0])))
        chosen: list[tuple[int, Detection]] = []
        for i, d in group:
            if all(iou(d.box, k.box) <= cfg.nms_iou_threshold for _, k in chosen):
                chosen.append((i, d))
        kept.extend(chosen)
    kept.sort(key=lambda p: (-p[1].confidence, p[1].class_id, _slot_key(p[1], p[0])))
    return [d for _, d in kept]


def to_original_frame(dets: list[Detection], m: LetterboxMap) -> list[Detection]:
    """Map network-frame detections back onto the source image and clamp to
    its bounds; boxes entirely inside the padding band are dropped."""
    out = []
    for d in dets:
        if d.box.frame != PIXEL_NETWORK:
            raise FrameMismatchError(f"expected {PIXEL_NETWORK} box, got {d.box.frame}")
        b = letterbox_backward(m, d.box)
        x1, y1, x2, y2 = b.to_corners()
        x1 = min(max(x1, 0.0), float(m.src_w))
        x2 = min(max(x2, 0.0), float(m.src_w))
        y1 = min(max(y1, 0.0), float(m.src_h))
        y2 = min(max(y2, 0.0), float(m.src_h))
        if x2 - x1 <= 0.0 or y2 - y1 <= 0.0:
            continue
        out.append(replace(d, box=Box.from_corners(x1, y1, x2, y2, PIXEL_ORIGINAL)))
    return out


def format_detection_line(image_id: str, d: Detection) -> str:
    """One text record per detection:
    ``image_id class_name confidence x_min y_min x_max y_max``
    with integer original-pixel corners and 4-decimal confidence."""
    x1, y1, x2, y2 = d.box.to_corners()
    return (
        f"{image_id} {d.class_name} {d.confidence:.4f} "
        f"{round(x1)} {round(y1)} {round(x2)} {round(y2)}"
    )


def parse_detection_line(line: str, vocabulary) -> tuple[str, Detection]:
    """Parse one serialized record.  The record carries only the composite
    confidence, so objectness is set equal to it."""
    parts = line.split()
    if len(parts) != 7:
        raise ConfigError(f"bad detection record: {line!r}")
    image_id, class_name = parts[0], parts[1]
    conf = float(parts[2])
    x1, y1, x2, y2 = (float(p) for p in parts[3:7])
    names = tuple(vocabulary)
    if class_name not in names:
        raise ConfigError(f"unknown class {class_name!r} in record {line!r}")
    class_id = names.index(class_name)
    det = Detection(
        box=Box.from_corners(x1, y1, x2, y2, PIXEL_ORIGINAL),
        class_id=class_id,
        class_name=class_name,
        confidence=conf,
        objectness=conf,
        source_phase=Phase.PHASE1 if len(names) == 1 else Phase.PHASE2,
    )
    return image_id, det
