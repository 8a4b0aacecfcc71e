import json

import numpy as np
import pytest

from wbcdetect.dataset import (
    EXPECTED_TEST_COUNTS,
    EXPECTED_TRAIN_COUNTS,
    PHASE2_CLASSES,
    Annotation,
    ClassVocabulary,
    DatasetManifest,
    ManifestEntry,
    Split,
    build_manifest,
    expand_augmented,
    load_manifest,
    parse_voc,
    sample_detection_testset,
    save_manifest,
    serialize_voc,
)
from wbcdetect.errors import (
    InputError,
    SamplingError,
    VocGeometryError,
    VocParseError,
    VocSchemaError,
)
from wbcdetect.geometry import FLIP_H, ROT90, Box

MINIMAL_XML = b"""<annotation>
  <filename>BloodImage_00001.jpeg</filename>
  <size><width>320</width><height>240</height><depth>3</depth></size>
  <object>
    <name>WBC</name>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>110</xmax><ymax>220</ymax></bndbox>
  </object>
</annotation>
"""


class TestParseVoc:
    def test_minimal_annotation(self):
        ann = parse_voc(MINIMAL_XML)
        assert ann.image_id == "BloodImage_00001"
        assert (ann.image_w, ann.image_h) == (320, 240)
        [(name, box)] = ann.objects
        assert name == "WBC"
        # width = xmax - xmin, center = midpoint
        assert (box.cx, box.cy, box.w, box.h) == (60.0, 120.0, 100.0, 200.0)

    def test_zero_objects(self):
        xml = b"<annotation><size><width>320</width><height>240</height></size></annotation>"
        ann = parse_voc(xml)
        assert ann.objects == ()

    def test_malformed_xml_reports_offset(self):
        with pytest.raises(VocParseError) as ei:
            parse_voc(b"<annotation><size>")
        assert ei.value.byte_offset is not None

    def test_degenerate_box_names_object_index(self):
        xml = MINIMAL_XML.replace(b"<xmax>110</xmax>", b"<xmax>10</xmax>")
        with pytest.raises(VocGeometryError, match="object 0"):
            parse_voc(xml)

    def test_out_of_bounds_box_rejected(self):
        xml = MINIMAL_XML.replace(b"<xmax>110</xmax>", b"<xmax>321</xmax>")
        with pytest.raises(VocGeometryError):
            parse_voc(xml)

    def test_missing_size_is_schema_error(self):
        with pytest.raises(VocSchemaError):
            parse_voc(b"<annotation><object><name>WBC</name></object></annotation>")

    def test_unknown_class_names_preserved(self):
        xml = MINIMAL_XML.replace(b"WBC", b"RBC")
        ann = parse_voc(xml)
        assert ann.objects[0][0] == "RBC"

    def test_serialize_roundtrip_exact(self):
        rng = np.random.default_rng(0)
        names = list(PHASE2_CLASSES)
        for _ in range(100):
            objects = []
            for _ in range(rng.integers(0, 5)):
                x1, y1 = int(rng.integers(0, 200)), int(rng.integers(0, 150))
                x2 = int(rng.integers(x1 + 1, 320))
                y2 = int(rng.integers(y1 + 1, 240))
                objects.append(
                    (names[rng.integers(0, 4)], Box.from_corners(x1, y1, x2, y2))
                )
            ann = Annotation(f"img_{rng.integers(0, 10 ** 6)}", 320, 240, tuple(objects))
            assert parse_voc(serialize_voc(ann)) == ann


class TestVocabulary:
    def test_phase2_order_and_ids(self):
        assert tuple(PHASE2_CLASSES) == ("Eosinophil", "Lymphocyte", "Monocyte", "Neutrophil")
        assert PHASE2_CLASSES.id_of("Eosinophil") == 0
        assert PHASE2_CLASSES.name_of(3) == "Neutrophil"

    def test_duplicates_rejected(self):
        with pytest.raises(InputError):
            ClassVocabulary(("WBC", "WBC"))

    def test_published_split_sums(self):
        assert sum(EXPECTED_TEST_COUNTS.values()) == 2430
        assert sum(EXPECTED_TRAIN_COUNTS.values()) == 9966


def make_corpus(root, counts, split="test", annotate=()):
    """Lay out <root>/<split>/<Class>/*.jpeg plus VOC files for `annotate`."""
    ann_dir = root / "annotations"
    ann_dir.mkdir(parents=True, exist_ok=True)
    for cls, n in counts.items():
        d = root / split / cls
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            image_id = f"{cls}_{i:04d}"
            (d / f"{image_id}.jpeg").touch()
            if image_id in annotate:
                ann = Annotation(
                    image_id, 320, 240, ((cls, Box.from_corners(50, 40, 200, 200)),)
                )
                (ann_dir / f"{image_id}.xml").write_bytes(serialize_voc(ann))


class TestBuildManifest:
    def test_counts_and_annotations(self, tmp_path):
        counts = {"Eosinophil": 3, "Lymphocyte": 2, "Monocyte": 4, "Neutrophil": 1}
        make_corpus(tmp_path, counts, annotate={"Eosinophil_0000", "Monocyte_0001"})
        man = build_manifest(tmp_path, Split.TEST)
        assert man.per_class_counts == counts
        assert len(man) == 10
        with_ann = [e for e in man.entries if e.annotation is not None]
        assert {e.image_id for e in with_ann} == {"Eosinophil_0000", "Monocyte_0001"}
        assert [e.image_id for e in man.entries] == sorted(e.image_id for e in man.entries)

    def test_empty_split_dir(self, tmp_path):
        (tmp_path / "test").mkdir()
        man = build_manifest(tmp_path, Split.TEST)
        assert len(man) == 0 and man.per_class_counts == {}

    def test_missing_root_raises(self, tmp_path):
        with pytest.raises(InputError):
            build_manifest(tmp_path / "nope", Split.TEST)

    def test_expected_counts_mismatch_warns_not_fatal(self, tmp_path):
        make_corpus(tmp_path, {"Eosinophil": 2})
        (tmp_path / "expected_counts.json").write_text(json.dumps({"test": {"Eosinophil": 574}}))
        man = build_manifest(tmp_path, Split.TEST)
        assert len(man) == 2
        assert any("expected 574, found 2" in w for w in man.warnings)

    def test_corrupt_annotation_skipped_with_warning(self, tmp_path):
        make_corpus(tmp_path, {"Lymphocyte": 1})
        (tmp_path / "annotations" / "Lymphocyte_0000.xml").write_bytes(b"<broken")
        man = build_manifest(tmp_path, Split.TEST)
        assert len(man) == 1
        assert man.entries[0].annotation is None
        assert any("Lymphocyte_0000" in w for w in man.warnings)

    def test_uppercase_split_dir_found(self, tmp_path):
        (tmp_path / "TEST" / "Monocyte").mkdir(parents=True)
        (tmp_path / "TEST" / "Monocyte" / "a.jpeg").touch()
        man = build_manifest(tmp_path, Split.TEST)
        assert len(man) == 1


def label_only_manifest(per_class):
    entries = []
    for cls, n in per_class.items():
        for i in range(n):
            entries.append(ManifestEntry(f"{cls}_{i:04d}", "", cls, 320, 240, None))
    entries.sort(key=lambda e: e.image_id)
    return DatasetManifest(Split.TEST, tuple(entries))


class TestSampler:
    def test_uniform_histogram(self):
        man = label_only_manifest({c: 60 for c in PHASE2_CLASSES})
        picked = sample_detection_testset(man, n=200, seed=1)
        hist = {}
        for e in picked:
            hist[e.class_name] = hist.get(e.class_name, 0) + 1
        assert hist == {c: 50 for c in PHASE2_CLASSES}

    def test_one_per_class(self):
        man = label_only_manifest({c: 5 for c in PHASE2_CLASSES})
        picked = sample_detection_testset(man, n=4, seed=0)
        assert len(picked) == 4
        assert len({e.class_name for e in picked}) == 4

    def test_deterministic_per_seed(self):
        man = label_only_manifest({c: 60 for c in PHASE2_CLASSES})
        a = sample_detection_testset(man, n=200, seed=9)
        b = sample_detection_testset(man, n=200, seed=9)
        assert [e.image_id for e in a] == [e.image_id for e in b]
        c = sample_detection_testset(man, n=200, seed=10)
        assert [e.image_id for e in a] != [e.image_id for e in c]

    def test_insufficient_population(self):
        man = label_only_manifest({c: 10 for c in PHASE2_CLASSES})
        with pytest.raises(SamplingError):
            sample_detection_testset(man, n=200, seed=0)

    def test_indivisible_n(self):
        man = label_only_manifest({c: 60 for c in PHASE2_CLASSES})
        with pytest.raises(SamplingError):
            sample_detection_testset(man, n=202, seed=0)


def annotated_entry(image_id, cls="Lymphocyte", w=320, h=240):
    ann = Annotation(image_id, w, h, ((cls, Box.from_corners(50, 40, 200, 200)),))
    return ManifestEntry(image_id, f"{image_id}.jpeg", cls, w, h, ann)


class TestExpandAugmented:
    def test_flip_doubles_entries(self):
        man = DatasetManifest(Split.TRAIN, tuple(annotated_entry(f"im{i}") for i in range(10)))
        out = expand_augmented(man, [FLIP_H], seed=0)
        assert len(out) == 20
        assert sum(1 for e in out.entries if e.image_id.endswith("#fliph")) == 10

    def test_rot90_swaps_dims_and_maps_boxes(self):
        man = DatasetManifest(Split.TRAIN, (annotated_entry("im0"),))
        out = expand_augmented(man, [ROT90], seed=0)
        aug = next(e for e in out.entries if e.image_id == "im0#rot90")
        assert (aug.image_w, aug.image_h) == (240, 320)
        [(_, box)] = aug.annotation.objects
        # hand oracle for a counter-clockwise quarter turn of (50,40,200,200)
        src = Box.from_corners(50, 40, 200, 200)
        assert (box.cx, box.cy) == (src.cy, 320 - src.cx)
        assert (box.w, box.h) == (src.h, src.w)

    def test_no_ops_is_identity(self):
        man = DatasetManifest(Split.TRAIN, (annotated_entry("im0"),))
        assert expand_augmented(man, [], seed=0) is man

    def test_object_counts_preserved(self):
        ann = Annotation(
            "multi",
            320,
            240,
            (
                ("Monocyte", Box.from_corners(10, 10, 60, 60)),
                ("Monocyte", Box.from_corners(100, 100, 180, 200)),
            ),
        )
        man = DatasetManifest(
            Split.TRAIN, (ManifestEntry("multi", "", "Monocyte", 320, 240, ann),)
        )
        out = expand_augmented(man, [FLIP_H, ROT90], seed=0)
        for e in out.entries:
            assert len(e.annotation.objects) == 2


class TestManifestCache:
    def test_jsonl_roundtrip(self, tmp_path):
        entries = (
            annotated_entry("im0"),
            ManifestEntry("im1", "im1.jpeg", "Monocyte", 320, 240, None),
        )
        man = DatasetManifest(Split.TEST, entries)
        path = tmp_path / "manifest.jsonl"
        save_manifest(man, path)
        back = load_manifest(path)
        assert back.entries == man.entries

    def test_bad_record_raises(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text("not json\n")
        with pytest.raises(InputError):
            load_manifest(path)
