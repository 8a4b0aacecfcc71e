#!/usr/bin/env python3
"""Corpus ingestion: VOC XML, manifests, balanced sampling, augmentation.

The corpus layout is <root>/<split>/<ClassName>/*.jpeg with VOC XML boxes in
<root>/annotations/ for the images that have them.  This demo builds a tiny
fixture on disk and walks it.
"""

import tempfile
from pathlib import Path

from wbcdetect import (
    Annotation,
    Box,
    Split,
    build_manifest,
    expand_augmented,
    parse_voc,
    sample_detection_testset,
    serialize_voc,
)
from wbcdetect.geometry import FLIP_H, ROT90

# -- one annotation ----------------------------------------------------
ann = Annotation("BloodImage_00001", 320, 240, (("WBC", Box.from_corners(10, 20, 110, 220)),))
xml = serialize_voc(ann)
print(xml.decode())
parsed = parse_voc(xml)
[(name, box)] = parsed.objects
print(f"parsed back: {name} center ({box.cx}, {box.cy}) size ({box.w}, {box.h})")
print("round trip exact:", parsed == ann)

# -- a corpus fixture --------------------------------------------------
root = Path(tempfile.mkdtemp(prefix="wbc_demo_"))
(root / "annotations").mkdir()
for cls, n in [("Eosinophil", 6), ("Lymphocyte", 5), ("Monocyte", 7), ("Neutrophil", 5)]:
    d = root / "test" / cls
    d.mkdir(parents=True)
    for i in range(n):
        image_id = f"{cls}_{i:03d}"
        (d / f"{image_id}.jpeg").touch()
        a = Annotation(image_id, 320, 240, ((cls, Box.from_corners(60, 40, 230, 200)),))
        (root / "annotations" / f"{image_id}.xml").write_bytes(serialize_voc(a))

manifest = build_manifest(root, Split.TEST)
print("\nper-class counts:", manifest.per_class_counts)

picked = sample_detection_testset(manifest, n=8, seed=0)
hist = {}
for e in picked:
    hist[e.class_name] = hist.get(e.class_name, 0) + 1
print("balanced 8-image sample:", hist)

# -- augmentation expansion ---------------------------------------------
expanded = expand_augmented(manifest, [FLIP_H, ROT90], seed=1)
print(f"\n{len(manifest)} entries become {len(expanded)} after flip + quarter turn")
rotated = next(e for e in expanded.entries if e.image_id.endswith("#rot90"))
print("a rotated entry swaps its dims:", (rotated.image_w, rotated.image_h))
