#!/usr/bin/env python3
"""The full two-phase pipeline on a synthetic backbone.

Phase 1 localizes white blood cells with a single-class head (depth 18);
its boxes become supervision regions.  Phase 2 runs the four-subtype head
(depth 27) and links every detection to the phase-1 region it overlaps.
The toy backbone plants known objects, so we can check everything end to
end without a trained network.
"""

import numpy as np

from wbcdetect import (
    PHASE2_CLASSES,
    Box,
    DatasetManifest,
    HeadSpec,
    LetterboxMap,
    ManifestEntry,
    MatchRule,
    Phase,
    PhaseConfig,
    PlantedObject,
    PostprocessConfig,
    Split,
    ToyBackbone,
    build_report,
    iou,
    letterbox_forward,
    make_phase2_trainset,
    match_detections,
    run_phase1,
    run_phase2,
)
from wbcdetect.evaluation import MODE_DETECTION, ConfusionCounts

NAMES = tuple(PHASE2_CLASSES)
rng = np.random.default_rng(7)
m = LetterboxMap.fit(320, 240, 416)

# ten images, one planted subtype each (original-pixel ground truth)
images = []
for i in range(10):
    w, h = rng.uniform(70, 130, 2)
    cx = rng.uniform(w / 2 + 1, 320 - w / 2 - 1)
    cy = rng.uniform(h / 2 + 1, 240 - h / 2 - 1)
    images.append(
        {"image_id": f"smear{i:02d}", "box": Box(cx, cy, w, h), "class_id": i % 4}
    )

manifest = DatasetManifest(
    Split.TEST,
    tuple(ManifestEntry(im["image_id"], "", NAMES[im["class_id"]], 320, 240, None) for im in images),
)

# -- phase 1: WBC localization ------------------------------------------
plants1 = [PlantedObject(im["image_id"], letterbox_forward(m, im["box"]), 0) for im in images]
cfg1 = PhaseConfig(Phase.PHASE1, HeadSpec(num_classes=1), PostprocessConfig(), ToyBackbone(3, plants1))
phase1 = run_phase1(manifest, cfg1)
worst = min(iou(phase1.boxes[im["image_id"]][0][0], im["box"]) for im in images)
print(f"phase 1 found {sum(len(v) for v in phase1.boxes.values())} boxes, worst IoU {worst:.4f}")

# -- phase-1 boxes + image labels = supervision for phase 2 --------------
labels = {im["image_id"]: NAMES[im["class_id"]] for im in images}
trainset = make_phase2_trainset(phase1, labels, manifest)
print(f"pseudo-annotations for phase 2: {len(trainset)} images", trainset.warnings or "")

# -- phase 2: subtype detection ------------------------------------------
plants2 = [
    PlantedObject(im["image_id"], letterbox_forward(m, im["box"]), im["class_id"]) for im in images
]
cfg2 = PhaseConfig(Phase.PHASE2, HeadSpec(num_classes=4), PostprocessConfig(), ToyBackbone(4, plants2))
phase2 = run_phase2(manifest, cfg2, phase1)
for image_id, anchored in list(phase2.detections.items())[:4]:
    d = anchored[0].detection
    link = "unanchored" if anchored[0].unanchored else f"region {anchored[0].phase1_box_index}"
    print(f"  {image_id}: {d.class_name:<11} conf {d.confidence:.3f} <- {link}")

# -- score it --------------------------------------------------------------
counts = {n: ConfusionCounts() for n in NAMES}
support = {n: 0 for n in NAMES}
for im in images:
    preds = [a.detection for a in phase2.detections[im["image_id"]]]
    truths = [(NAMES[im["class_id"]], im["box"])]
    support[NAMES[im["class_id"]]] += 1
    for name, c in match_detections(preds, truths, MatchRule()).items():
        counts[name] = counts[name] + c

report = build_report(counts, MODE_DETECTION, PHASE2_CLASSES, support=support)
print("\n" + report.to_csv())
