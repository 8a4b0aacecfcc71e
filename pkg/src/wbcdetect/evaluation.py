"""Detection matching rules, confusion counts, and per-class report tables.

Matching contract (one image at a time, greedy in descending confidence):

  * a prediction with confidence <= conf_min counts as a false negative for
    its predicted class and never consumes a truth box;
  * an eligible prediction (confidence > conf_min) is a true positive iff a
    not-yet-matched truth of the same class overlaps it with IoU > iou_min
    (best such truth wins); otherwise it is a false positive;
  * every truth left unmatched adds a false negative for its own class.

Counting a low-confidence false alarm as a false negative is unusual, but it
is the stated protocol this toolkit reproduces; the standard alternative
(ignore it) can be had by pre-filtering predictions.

True negatives exist only in classification mode, where each class gets
one-vs-rest counts over single-label images.  Detection mode has no "true
negative box", so its accuracy reduces to TP/(TP+FP+FN); reports carry a
footnote saying so.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from .dataset import ClassVocabulary
from .errors import ConfigError, FrameMismatchError
from .geometry import Box, iou
from .postprocess import Detection

MODE_CLASSIFICATION = "classification"
MODE_DETECTION = "detection"

DETECTION_ACCURACY_FOOTNOTE = (
    "detection mode has no true-negative box; accuracy is TP/(TP+FP+FN)"
)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass(frozen=True)
class MatchRule:
    conf_min: float = 0.20
    iou_min: float = 0.40

    def __post_init__(self):
        if not (0.0 <= self.conf_min <= 1.0 and 0.0 <= self.iou_min <= 1.0):
            raise ConfigError(f"match thresholds outside [0,1]: {self}")


def _det_sort_key(d: Detection):
    # Total order independent of input order: confidence, then class, then
    # geometry, so permuting predictions never changes the outcome.
    return (-d.confidence, d.class_id, d.box.cx, d.box.cy, d.box.w, d.box.h)


def match_detections(
    preds: list[Detection],
    truths: list[tuple[str, Box]],
    rule: MatchRule = MatchRule(),
) -> dict[str, ConfusionCounts]:
    """Apply the matching contract to one image; returns per-class counts."""
    frames = {d.box.frame for d in preds} | {b.frame for _, b in truths}
    if len(frames) > 1:
        raise FrameMismatchError(f"predictions/truths span frames {frames}")

    counts: dict[str, ConfusionCounts] = {}

    def bump(cls: str, **kw):
        counts[cls] = counts.get(cls, ConfusionCounts()) + ConfusionCounts(**kw)

    matched = [False] * len(truths)
    for d in sorted(preds, key=_det_sort_key):
        if d.confidence <= rule.conf_min:
            bump(d.class_name, fn=1)
            continue
        best_iou = rule.iou_min
        best_t = None
        for t, (cls, tbox) in enumerate(truths):
            if matched[t] or cls != d.class_name:
                continue
            v = iou(d.box, tbox)
            if v > best_iou:
                best_iou = v
                best_t = t
        if best_t is None:
            bump(d.class_name, fp=1)
        else:
            matched[best_t] = True
            bump(d.class_name, tp=1)

    for t, (cls, _) in enumerate(truths):
        if not matched[t]:
            bump(cls, fn=1)
    return counts


def classify_image(preds: list[Detection]) -> int | None:
    """Image-level label: class of the highest-confidence detection, or None."""
    if not preds:
        return None
    best = min(preds, key=_det_sort_key)
    return best.class_id


def aggregate_classification(
    samples: list[tuple[int, int | None]], vocabulary: ClassVocabulary
) -> dict[str, ConfusionCounts]:
    """One-vs-rest confusion counts over (true_id, predicted_id) pairs.

    A missed image (predicted None) is a false negative for its true class
    and a true negative everywhere else.
    """
    counts = {name: ConfusionCounts() for name in vocabulary}
    for true_id, pred_id in samples:
        for cid, name in enumerate(vocabulary):
            if cid == true_id:
                kw = {"tp": 1} if pred_id == true_id else {"fn": 1}
            elif cid == pred_id:
                kw = {"fp": 1}
            else:
                kw = {"tn": 1}
            counts[name] = counts[name] + ConfusionCounts(**kw)
    return counts


@dataclass(frozen=True)
class ClassMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: tuple[str, ...] = ()


def metrics(c: ConfusionCounts) -> ClassMetrics:
    """Accuracy, precision, recall, F1 from raw counts.

    A zero denominator yields 0 for that metric, flagged in ``degenerate``
    rather than raised.
    """
    degenerate = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    accuracy = ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn, "accuracy")
    precision = ratio(c.tp, c.tp + c.fp, "precision")
    recall = ratio(c.tp, c.tp + c.fn, "recall")
    if precision + recall == 0.0:
        degenerate.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * recall * precision / (recall + precision)
    return ClassMetrics(accuracy, precision, recall, f1, tuple(degenerate))


@dataclass(frozen=True)
class ReportRow:
    class_name: str
    counts: ConfusionCounts
    metrics: ClassMetrics
    support: int


@dataclass(frozen=True)
class EvalReport:
    mode: str
    rows: tuple[ReportRow, ...]
    overall_accuracy: float
    config_echo: dict | None = None
    footnotes: tuple[str, ...] = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "f1", "precision", "recall", "support"])
        for r in self.rows:
            w.writerow(
                [
                    r.class_name,
                    f"{r.metrics.f1:.4f}",
                    f"{r.metrics.precision:.4f}",
                    f"{r.metrics.recall:.4f}",
                    r.support,
                ]
            )
        w.writerow(["overall_accuracy", f"{self.overall_accuracy:.4f}", "", "", ""])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "mode": self.mode,
            "overall_accuracy": self.overall_accuracy,
            "per_class": {
                r.class_name: {
                    "tp": r.counts.tp,
                    "fp": r.counts.fp,
                    "fn": r.counts.fn,
                    "tn": r.counts.tn,
                    "accuracy": r.metrics.accuracy,
                    "precision": r.metrics.precision,
                    "recall": r.metrics.recall,
                    "f1": r.metrics.f1,
                    "support": r.support,
                    "degenerate": list(r.metrics.degenerate),
                }
                for r in self.rows
            },
            "footnotes": list(self.footnotes),
            "config": self.config_echo,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def build_report(
    counts: dict[str, ConfusionCounts],
    mode: str,
    vocabulary: ClassVocabulary,
    config_echo: dict | None = None,
    support: dict[str, int] | None = None,
) -> EvalReport:
    """Assemble the per-class table in canonical class order.

    Every vocabulary class must be present in ``counts``; support defaults to
    tp+fn (exact in classification mode, where each image contributes one of
    the two to its true class).
    """
    if mode not in (MODE_CLASSIFICATION, MODE_DETECTION):
        raise ConfigError(f"unknown report mode {mode!r}")
    missing = [n for n in vocabulary if n not in counts]
    if missing:
        raise ConfigError(f"counts missing classes: {missing}")

    rows = []
    for name in vocabulary:
        c = counts[name]
        sup = support[name] if support is not None else c.tp + c.fn
        rows.append(ReportRow(name, c, metrics(c), sup))

    total = ConfusionCounts()
    for c in counts.values():
        total = total + c
    if mode == MODE_CLASSIFICATION:
        den = total.tp + total.fn
        overall = total.tp / den if den else 0.0
        footnotes: tuple[str, ...] = ()
    else:
        den = total.tp + total.fp + total.fn
        overall = total.tp / den if den else 0.0
        footnotes = (DETECTION_ACCURACY_FOOTNOTE,)
    return EvalReport(mode, tuple(rows), overall, config_echo, footnotes)
