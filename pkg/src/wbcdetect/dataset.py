"""Corpus ingestion: VOC XML annotations, class vocabulary, split manifests,
augmentation expansion, and the balanced evaluation sampler.

The expected directory layout is the blood-cell corpus convention:

    <root>/<split>/<ClassName>/*.jpeg     classification images
    <root>/annotations/*.xml              VOC boxes for the detection subset

``bndbox`` integers are treated as inclusive pixel coordinates with
width = xmax - xmin (no +1), so IoU arithmetic downstream is unambiguous.
"""

from __future__ import annotations

import enum
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    InputError,
    SamplingError,
    VocGeometryError,
    VocParseError,
    VocSchemaError,
)
from .geometry import PIXEL_ORIGINAL, AugmentOp, Box, apply_augment, noise, transformed_dims


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered, unique class names; ids are positions in the tuple."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise InputError(f"duplicate class names: {self.names}")

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InputError(f"unknown class {name!r}") from None

    def name_of(self, class_id: int) -> str:
        return self.names[class_id]


PHASE1_CLASSES = ClassVocabulary(("WBC",))
# Fixed report row order; ids 0..3.
PHASE2_CLASSES = ClassVocabulary(("Eosinophil", "Lymphocyte", "Monocyte", "Neutrophil"))

# Published sizes of the blood-cell corpus splits, used for integrity checks.
EXPECTED_TRAIN_COUNTS = {
    "Eosinophil": 2497,
    "Lymphocyte": 2483,
    "Monocyte": 2487,
    "Neutrophil": 2499,
}
EXPECTED_TEST_COUNTS = {
    "Eosinophil": 574,
    "Lymphocyte": 620,
    "Monocyte": 620,
    "Neutrophil": 616,
}

_IMAGE_SUFFIXES = (".jpeg", ".jpg", ".png")


@dataclass(frozen=True)
class Annotation:
    """Ground truth for one image: dims plus (class_name, box) pairs."""

    image_id: str
    image_w: int
    image_h: int
    objects: tuple[tuple[str, Box], ...]


def _strip_image_suffix(name: str) -> str:
    for suf in _IMAGE_SUFFIXES:
        if name.lower().endswith(suf):
            return name[: -len(suf)]
    return name


def _byte_offset(data: bytes, line: int, column: int) -> int:
    lines = data.split(b"\n")
    return sum(len(l) + 1 for l in lines[: line - 1]) + column


def parse_voc(xml_bytes: bytes) -> Annotation:
    """Parse a VOC annotation file.

    Unknown class names are preserved verbatim; vocabulary filtering is the
    caller's concern.  Boxes are stored in center form, original-pixel frame.
    """
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as e:
        line, col = e.position
        off = _byte_offset(xml_bytes, line, col)
        raise VocParseError(f"malformed XML at byte {off}: {e}", byte_offset=off) from e

    size = root.find("size")
    if size is None or size.find("width") is None or size.find("height") is None:
        raise VocSchemaError("annotation lacks a size element with width/height")
    image_w = int(size.findtext("width"))
    image_h = int(size.findtext("height"))
    if image_w <= 0 or image_h <= 0:
        raise VocSchemaError(f"non-positive image dims {image_w}x{image_h}")

    image_id = _strip_image_suffix((root.findtext("filename") or "").strip())

    objects = []
    for idx, obj in enumerate(root.findall("object")):
        name = (obj.findtext("name") or "").strip()
        if not name:
            raise VocSchemaError(f"object {idx} lacks a name")
        bnd = obj.find("bndbox")
        if bnd is None:
            raise VocSchemaError(f"object {idx} lacks a bndbox")
        try:
            x_min = int(float(bnd.findtext("xmin")))
            y_min = int(float(bnd.findtext("ymin")))
            x_max = int(float(bnd.findtext("xmax")))
            y_max = int(float(bnd.findtext("ymax")))
        except (TypeError, ValueError) as e:
            raise VocSchemaError(f"object {idx} has incomplete bndbox") from e
        if x_max <= x_min or y_max <= y_min:
            raise VocGeometryError(
                f"object {idx}: degenerate box ({x_min},{y_min},{x_max},{y_max})"
            )
        if x_min < 0 or y_min < 0 or x_max > image_w or y_max > image_h:
            raise VocGeometryError(
                f"object {idx}: box ({x_min},{y_min},{x_max},{y_max}) "
                f"outside {image_w}x{image_h} image"
            )
        objects.append((name, Box.from_corners(x_min, y_min, x_max, y_max, PIXEL_ORIGINAL)))

    return Annotation(image_id, image_w, image_h, tuple(objects))


def serialize_voc(ann: Annotation) -> bytes:
    """Emit canonical VOC XML; parse_voc(serialize_voc(a)) == a exactly."""
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = f"{ann.image_id}.jpeg"
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(ann.image_w)
    ET.SubElement(size, "height").text = str(ann.image_h)
    ET.SubElement(size, "depth").text = "3"
    for name, box in ann.objects:
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = name
        bnd = ET.SubElement(obj, "bndbox")
        x1, y1, x2, y2 = box.to_corners()
        ET.SubElement(bnd, "xmin").text = str(round(x1))
        ET.SubElement(bnd, "ymin").text = str(round(y1))
        ET.SubElement(bnd, "xmax").text = str(round(x2))
        ET.SubElement(bnd, "ymax").text = str(round(y2))
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


class Split(enum.Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: str
    class_name: str | None
    image_w: int
    image_h: int
    annotation: Annotation | None


@dataclass(frozen=True)
class DatasetManifest:
    split: Split
    entries: tuple[ManifestEntry, ...]
    warnings: tuple[str, ...] = ()

    @property
    def per_class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.entries:
            if e.class_name is not None:
                counts[e.class_name] = counts.get(e.class_name, 0) + 1
        return counts

    def __len__(self) -> int:
        return len(self.entries)


def _find_split_dir(root: Path, split: Split) -> Path | None:
    for candidate in (split.value, split.value.upper(), split.value.capitalize()):
        p = root / candidate
        if p.is_dir():
            return p
    return None


def build_manifest(
    root_dir,
    split: Split,
    default_dims: tuple[int, int] = (320, 240),
    annotations_subdir: str = "annotations",
) -> DatasetManifest:
    """Walk ``<root>/<split>/<ClassName>/*`` and attach any VOC annotation
    found under ``<root>/annotations/<image_id>.xml``.

    Image files are referenced, never decoded; entries without an annotation
    fall back to ``default_dims``.  Corrupt annotation files are skipped with
    a warning instead of aborting the build.  An optional
    ``<root>/expected_counts.json`` ({split: {class: count}}) triggers
    integrity warnings on mismatch.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise InputError(f"dataset root {root} is not a directory")
    split_dir = _find_split_dir(root, split)
    if split_dir is None:
        raise InputError(f"no {split.value!r} directory under {root}")

    ann_dir = root / annotations_subdir
    warnings: list[str] = []
    entries: list[ManifestEntry] = []
    for class_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        class_name = class_dir.name
        for img in sorted(class_dir.iterdir()):
            if img.suffix.lower() not in _IMAGE_SUFFIXES:
                continue
            image_id = img.stem
            annotation = None
            xml_path = ann_dir / f"{image_id}.xml"
            if xml_path.is_file():
                try:
                    annotation = parse_voc(xml_path.read_bytes())
                    annotation = replace(annotation, image_id=image_id)
                except InputError as e:
                    warnings.append(f"skipped annotation {xml_path.name}: {e}")
            w, h = (
                (annotation.image_w, annotation.image_h) if annotation else default_dims
            )
            entries.append(
                ManifestEntry(image_id, str(img), class_name, w, h, annotation)
            )

    entries.sort(key=lambda e: e.image_id)

    expected_file = root / "expected_counts.json"
    if expected_file.is_file():
        try:
            expected = json.loads(expected_file.read_text()).get(split.value, {})
        except (json.JSONDecodeError, AttributeError):
            expected = {}
            warnings.append("unreadable expected_counts.json ignored")
        counts: dict[str, int] = {}
        for e in entries:
            counts[e.class_name] = counts.get(e.class_name, 0) + 1
        for cls, want in sorted(expected.items()):
            got = counts.get(cls, 0)
            if got != want:
                warnings.append(f"integrity: {split.value}/{cls} expected {want}, found {got}")

    return DatasetManifest(split, tuple(entries), tuple(warnings))


def sample_detection_testset(
    manifest: DatasetManifest, n: int = 200, seed: int = 0
) -> list[ManifestEntry]:
    """Draw n entries with an exactly uniform class histogram, seeded."""
    by_class: dict[str, list[ManifestEntry]] = {}
    for e in manifest.entries:
        if e.class_name is None:
            raise SamplingError(f"entry {e.image_id} has no class label")
        by_class.setdefault(e.class_name, []).append(e)
    classes = sorted(by_class)
    if not classes or n % len(classes) != 0:
        raise SamplingError(f"n={n} not divisible by {len(classes)} classes")
    per = n // len(classes)
    rng = np.random.default_rng(seed)
    out: list[ManifestEntry] = []
    for cls in classes:
        pool = by_class[cls]
        if len(pool) < per:
            raise SamplingError(f"class {cls} has {len(pool)} entries, need {per}")
        picks = rng.permutation(len(pool))[:per]
        out.extend(pool[i] for i in picks)
    return out


_OP_LABELS = {
    "fliph": "fliph",
    "flipv": "flipv",
    "rot90": "rot90",
    "rot180": "rot180",
    "rot270": "rot270",
    "noise": "noise",
}


def expand_augmented(
    manifest: DatasetManifest, ops: list[AugmentOp], seed: int = 0
) -> DatasetManifest:
    """Duplicate every entry once per op, transforming its annotation boxes.

    Augmented entries get ``image_id#opname`` provenance ids; noise ops are
    re-seeded per entry from ``seed`` so each duplicate names its own noise
    draw while leaving the boxes untouched.
    """
    if not ops:
        return manifest
    rng = np.random.default_rng(seed)
    out = list(manifest.entries)
    for entry in manifest.entries:
        for op in ops:
            if op.kind == "noise":
                op = noise(int(rng.integers(2**31)), op.sigma)
            new_w, new_h = transformed_dims(op, (entry.image_w, entry.image_h))
            annotation = entry.annotation
            if annotation is not None:
                names = [n for n, _ in annotation.objects]
                boxes = apply_augment(
                    op, (entry.image_w, entry.image_h), [b for _, b in annotation.objects]
                )
                annotation = Annotation(
                    f"{annotation.image_id}#{_OP_LABELS[op.kind]}",
                    new_w,
                    new_h,
                    tuple(zip(names, boxes)),
                )
            out.append(
                ManifestEntry(
                    f"{entry.image_id}#{_OP_LABELS[op.kind]}",
                    entry.path,
                    entry.class_name,
                    new_w,
                    new_h,
                    annotation,
                )
            )
    out.sort(key=lambda e: e.image_id)
    return DatasetManifest(manifest.split, tuple(out), manifest.warnings)


def save_manifest(manifest: DatasetManifest, path) -> None:
    """Cache a manifest as JSON lines, one record per entry."""
    lines = []
    for e in manifest.entries:
        rec = {
            "image_id": e.image_id,
            "path": e.path,
            "class_name": e.class_name,
            "dims": [e.image_w, e.image_h],
            "objects": [
                {
                    "class_name": name,
                    "xmin": round(b.to_corners()[0]),
                    "ymin": round(b.to_corners()[1]),
                    "xmax": round(b.to_corners()[2]),
                    "ymax": round(b.to_corners()[3]),
                }
                for name, b in (e.annotation.objects if e.annotation else ())
            ]
            if e.annotation is not None
            else None,
        }
        lines.append(json.dumps(rec, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_manifest(path, split: Split = Split.TEST) -> DatasetManifest:
    entries = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise InputError(f"{path}:{lineno}: bad manifest record: {e}") from e
        w, h = rec["dims"]
        annotation = None
        if rec.get("objects") is not None:
            objects = tuple(
                (
                    o["class_name"],
                    Box.from_corners(o["xmin"], o["ymin"], o["xmax"], o["ymax"], PIXEL_ORIGINAL),
                )
                for o in rec["objects"]
            )
            annotation = Annotation(rec["image_id"], w, h, objects)
        entries.append(
            ManifestEntry(rec["image_id"], rec["path"], rec.get("class_name"), w, h, annotation)
        )
    entries.sort(key=lambda e: e.image_id)
    return DatasetManifest(split, tuple(entries))
