#!/usr/bin/env python3
"""From raw candidates to final detections.

Confidence is objectness times the best class probability; candidates below
the 0.20 bar disappear, then greedy NMS removes same-class overlaps.  One
subtype never suppresses another.
"""

from wbcdetect import Box, PostprocessConfig, nms, score_and_filter
from wbcdetect.geometry import PIXEL_NETWORK
from wbcdetect.head import RawDetection

NAMES = ("Eosinophil", "Lymphocyte", "Monocyte", "Neutrophil")
cfg = PostprocessConfig(conf_threshold=0.20, nms_iou_threshold=0.45)


def candidate(cx, cy, obj, probs):
    return RawDetection(Box(cx, cy, 60, 60, PIXEL_NETWORK), obj, probs, 0, (0, 0), 0)


raw = [
    candidate(100, 100, 0.90, (0.10, 0.80, 0.20, 0.30)),  # strong Lymphocyte
    candidate(104, 100, 0.70, (0.05, 0.85, 0.10, 0.10)),  # overlapping duplicate
    candidate(104, 100, 0.80, (0.05, 0.10, 0.90, 0.10)),  # Monocyte in the same spot
    candidate(300, 200, 0.30, (0.30, 0.25, 0.20, 0.10)),  # too weak: 0.3*0.3 = 0.09
]

scored = score_and_filter(raw, cfg, NAMES)
print("after scoring and the 0.20 threshold:")
for d in scored:
    print(f"  {d.class_name:<11} conf {d.confidence:.3f}")

final = nms(scored, cfg)
print("\nafter per-class NMS:")
for d in final:
    print(f"  {d.class_name:<11} conf {d.confidence:.3f} center ({d.box.cx:.0f},{d.box.cy:.0f})")

print("\nthe duplicate Lymphocyte is gone; the Monocyte survives because")
print("suppression never crosses class boundaries.")
