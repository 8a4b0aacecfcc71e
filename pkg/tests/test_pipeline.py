import pytest

from wbcdetect.dataset import (
    PHASE2_CLASSES,
    DatasetManifest,
    ManifestEntry,
    Split,
)
from wbcdetect.errors import ConfigError
from wbcdetect.geometry import Box, LetterboxMap, iou, letterbox_forward
from wbcdetect.head import HeadSpec
from wbcdetect.inference import PlantedObject, TensorDirBackbone, ToyBackbone
from wbcdetect.pipeline import (
    PhaseConfig,
    make_phase2_trainset,
    run_phase1,
    run_phase2,
)
from wbcdetect.postprocess import Phase, PostprocessConfig

SPEC1 = HeadSpec(num_classes=1)
SPEC4 = HeadSpec(num_classes=4)
MAP_320 = LetterboxMap.fit(320, 240, 416)


def entry(image_id):
    return ManifestEntry(image_id, "", None, 320, 240, None)


def manifest(n, prefix="img"):
    return DatasetManifest(Split.TEST, tuple(entry(f"{prefix}{i:03d}") for i in range(n)))


def network_box(orig_box):
    return letterbox_forward(MAP_320, orig_box)


class TestPhaseConfig:
    def test_phase1_requires_depth_18(self):
        PhaseConfig(Phase.PHASE1, SPEC1, PostprocessConfig(), ToyBackbone())
        with pytest.raises(ConfigError):
            PhaseConfig(Phase.PHASE1, SPEC4, PostprocessConfig(), ToyBackbone())

    def test_phase2_requires_depth_27(self):
        PhaseConfig(Phase.PHASE2, SPEC4, PostprocessConfig(), ToyBackbone())
        with pytest.raises(ConfigError):
            PhaseConfig(Phase.PHASE2, SPEC1, PostprocessConfig(), ToyBackbone())

    def test_default_vocabulary_by_phase(self):
        cfg = PhaseConfig(Phase.PHASE2, SPEC4, PostprocessConfig(), ToyBackbone())
        assert tuple(cfg.vocabulary) == tuple(PHASE2_CLASSES)


class TestRunPhase1:
    def test_one_plant_per_image_recovered(self):
        man = manifest(10)
        orig = Box(160.0, 120.0, 90.0, 80.0)
        plants = [
            PlantedObject(e.image_id, network_box(orig), 0) for e in man.entries
        ]
        cfg = PhaseConfig(Phase.PHASE1, SPEC1, PostprocessConfig(), ToyBackbone(seed=1, plants=plants))
        out = run_phase1(man, cfg)
        assert len(out.boxes) == 10 and not out.skipped
        for image_id, pairs in out.boxes.items():
            assert len(pairs) == 1
            box, conf = pairs[0]
            assert iou(box, orig) >= 0.9
            assert conf >= 0.20

    def test_empty_manifest(self):
        cfg = PhaseConfig(Phase.PHASE1, SPEC1, PostprocessConfig(), ToyBackbone(seed=2))
        out = run_phase1(DatasetManifest(Split.TEST, ()), cfg)
        assert out.boxes == {} and out.skipped == ()

    def test_weak_plant_filtered_by_threshold(self):
        man = manifest(1)
        weak = PlantedObject(
            "img000", network_box(Box(160.0, 120.0, 90.0, 80.0)), 0, objectness=0.3, class_score=0.5
        )
        cfg = PhaseConfig(Phase.PHASE1, SPEC1, PostprocessConfig(conf_threshold=0.20), ToyBackbone(seed=3, plants=[weak]))
        out = run_phase1(man, cfg)
        assert out.boxes["img000"] == []

    def test_backbone_failure_skips_image(self, tmp_path):
        man = manifest(3)
        cfg = PhaseConfig(Phase.PHASE1, SPEC1, PostprocessConfig(), TensorDirBackbone(tmp_path))
        out = run_phase1(man, cfg)
        assert out.boxes == {}
        assert len(out.skipped) == 3

    def test_wrong_phase_rejected(self):
        cfg = PhaseConfig(Phase.PHASE2, SPEC4, PostprocessConfig(), ToyBackbone())
        with pytest.raises(ConfigError):
            run_phase1(manifest(1), cfg)


class TestMakePhase2Trainset:
    def make_output(self, boxes_by_image):
        from wbcdetect.pipeline import Phase1Output

        return Phase1Output(boxes_by_image)

    def test_direct_pairing(self):
        man = manifest(10)
        out = self.make_output(
            {e.image_id: [(Box(160, 120, 90, 80), 0.9)] for e in man.entries}
        )
        labels = {e.image_id: "Lymphocyte" for e in man.entries}
        trainset = make_phase2_trainset(out, labels, man)
        assert len(trainset) == 10
        for e in trainset.entries:
            assert e.class_name == "Lymphocyte"
            [(name, _)] = e.annotation.objects
            assert name == "Lymphocyte"

    def test_zero_box_image_excluded_and_counted(self):
        man = manifest(2)
        out = self.make_output({"img000": [(Box(160, 120, 90, 80), 0.9)], "img001": []})
        trainset = make_phase2_trainset(out, {"img000": "Monocyte", "img001": "Monocyte"}, man)
        assert len(trainset) == 1
        assert any("1 image(s) with zero phase-1 boxes" in w for w in trainset.warnings)

    def test_two_boxes_one_label_fan_out(self):
        man = manifest(1)
        out = self.make_output(
            {"img000": [(Box(100, 120, 50, 60), 0.9), (Box(250, 120, 40, 40), 0.8)]}
        )
        trainset = make_phase2_trainset(out, {"img000": "Eosinophil"}, man)
        [e] = trainset.entries
        assert len(e.annotation.objects) == 2
        assert all(name == "Eosinophil" for name, _ in e.annotation.objects)
        assert any("fanned" in w for w in trainset.warnings)

    def test_missing_label_excluded_with_warning(self):
        man = manifest(1)
        out = self.make_output({"img000": [(Box(160, 120, 90, 80), 0.9)]})
        trainset = make_phase2_trainset(out, {}, man)
        assert len(trainset) == 0
        assert any("no subtype label" in w for w in trainset.warnings)


class TestRunPhase2:
    def test_detections_anchor_to_phase1_regions(self):
        man = manifest(5)
        orig = Box(160.0, 120.0, 90.0, 80.0)
        net = network_box(orig)
        p1_plants = [PlantedObject(e.image_id, net, 0) for e in man.entries]
        cfg1 = PhaseConfig(Phase.PHASE1, SPEC1, PostprocessConfig(), ToyBackbone(seed=4, plants=p1_plants))
        p1 = run_phase1(man, cfg1)

        p2_plants = [PlantedObject(e.image_id, net, 2) for e in man.entries]
        cfg2 = PhaseConfig(Phase.PHASE2, SPEC4, PostprocessConfig(), ToyBackbone(seed=5, plants=p2_plants))
        res = run_phase2(man, cfg2, p1)
        assert len(res.detections) == 5
        for image_id, anchored in res.detections.items():
            assert len(anchored) == 1
            a = anchored[0]
            assert not a.unanchored and a.phase1_box_index == 0
            assert a.detection.class_name == "Monocyte"

    def test_standalone_mode_is_unanchored(self):
        man = manifest(1)
        plant = PlantedObject("img000", network_box(Box(160.0, 120.0, 90.0, 80.0)), 3)
        cfg2 = PhaseConfig(Phase.PHASE2, SPEC4, PostprocessConfig(), ToyBackbone(seed=6, plants=[plant]))
        res = run_phase2(man, cfg2, None)
        [a] = res.detections["img000"]
        assert a.unanchored

    def test_results_ordered_by_image_id(self):
        ids = ["zeta", "alpha", "mid"]
        man = DatasetManifest(Split.TEST, tuple(entry(i) for i in ids))
        cfg2 = PhaseConfig(Phase.PHASE2, SPEC4, PostprocessConfig(), ToyBackbone(seed=7))
        res = run_phase2(man, cfg2)
        assert list(res.detections) == sorted(ids)

    def test_determinism_across_runs(self):
        man = manifest(3)
        plants = [
            PlantedObject(e.image_id, network_box(Box(160.0, 120.0, 90.0, 80.0)), 1)
            for e in man.entries
        ]
        cfg2 = PhaseConfig(Phase.PHASE2, SPEC4, PostprocessConfig(), ToyBackbone(seed=8, plants=plants))
        a = run_phase2(man, cfg2)
        b = run_phase2(man, cfg2)
        assert a == b
