"""White blood cell detection toolkit.

A two-phase detection pipeline for blood smear images: YOLOv3-style head
decoding, anchor clustering, per-class suppression, VOC corpus ingestion, and
single-operating-point evaluation, with the trained network abstracted behind
a backbone adapter so every numeric path is testable offline.
"""

from .anchors import AnchorConfig, AnchorResult, assign_to_scales, cluster_anchors
from .dataset import (
    PHASE1_CLASSES,
    PHASE2_CLASSES,
    Annotation,
    ClassVocabulary,
    DatasetManifest,
    ManifestEntry,
    Split,
    build_manifest,
    expand_augmented,
    parse_voc,
    sample_detection_testset,
    serialize_voc,
)
from .evaluation import (
    ConfusionCounts,
    EvalReport,
    MatchRule,
    build_report,
    classify_image,
    match_detections,
    metrics,
)
from .geometry import (
    PIXEL_NETWORK,
    PIXEL_ORIGINAL,
    AugmentOp,
    Box,
    Frame,
    LetterboxMap,
    apply_augment,
    grid_scale,
    iou,
    letterbox_backward,
    letterbox_forward,
)
from .head import (
    AnchorBox,
    GridTensor,
    HeadSpec,
    RawDetection,
    decode_cell,
    decode_grid,
    encode_cell,
)
from .inference import (
    BackboneAdapter,
    PlantedObject,
    TensorDirBackbone,
    ToyBackbone,
    read_tensor_file,
    write_tensor_file,
)
from .pipeline import (
    AnchoredDetection,
    Phase1Output,
    PhaseConfig,
    PipelineResult,
    RunDescription,
    make_phase2_trainset,
    run_phase1,
    run_phase2,
)
from .postprocess import (
    Detection,
    Phase,
    PostprocessConfig,
    format_detection_line,
    nms,
    parse_detection_line,
    score_and_filter,
    to_original_frame,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorBox",
    "AnchorConfig",
    "AnchorResult",
    "AnchoredDetection",
    "Annotation",
    "AugmentOp",
    "BackboneAdapter",
    "Box",
    "ClassVocabulary",
    "ConfusionCounts",
    "DatasetManifest",
    "Detection",
    "EvalReport",
    "Frame",
    "GridTensor",
    "HeadSpec",
    "LetterboxMap",
    "ManifestEntry",
    "MatchRule",
    "PHASE1_CLASSES",
    "PHASE2_CLASSES",
    "Phase",
    "Phase1Output",
    "PhaseConfig",
    "PipelineResult",
    "PlantedObject",
    "PostprocessConfig",
    "RawDetection",
    "RunDescription",
    "Split",
    "TensorDirBackbone",
    "ToyBackbone",
    "apply_augment",
    "assign_to_scales",
    "build_manifest",
    "build_report",
    "classify_image",
    "cluster_anchors",
    "decode_cell",
    "decode_grid",
    "encode_cell",
    "expand_augmented",
    "format_detection_line",
    "grid_scale",
    "iou",
    "letterbox_backward",
    "letterbox_forward",
    "make_phase2_trainset",
    "match_detections",
    "metrics",
    "nms",
    "parse_detection_line",
    "parse_voc",
    "read_tensor_file",
    "run_phase1",
    "run_phase2",
    "sample_detection_testset",
    "score_and_filter",
    "serialize_voc",
    "to_original_frame",
    "write_tensor_file",
    "PIXEL_NETWORK",
    "PIXEL_ORIGINAL",
]
