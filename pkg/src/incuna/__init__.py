"""Layout analysis, OCR and picture enrichment for digitized early printed
books: corpus ingestion, five-class region detection with F1-confidence
evaluation, class-routed crop extraction, OCR, picture subclassification and
zero-shot description, emitting one enrichment record per page.
"""

from .annotations import BoundingBox, LayoutClass, PageAnnotation, parse_labels, write_labels
from .corpus import DatasetManifest, PageImage, SourceDocument
from .crops import Crop, extract_crops
from .detection import (
    Detection,
    DetectionDataset,
    LabeledPage,
    StubDetectorBackend,
    TrainedDetector,
    TrainingStrategy,
    detect_page,
    filter_detections,
    train_detector,
)
from .doclaynet import DROP, RemapRule, default_remap, remap_dataset
from .errors import IncunaError
from .evaluation import (
    EvalReport,
    F1CurvePoint,
    MatchResult,
    best_operating_point,
    f1,
    f1_confidence_curve,
    iou,
    match_detections,
    render_report,
)
from .ingest import build_corpus, extract_pages
from .ocr import OcrResult, cer, compare_engines, run_ocr, wer
from .pictures import (
    DEFAULT_PROMPTS,
    PictureSubclass,
    SemanticMatch,
    SubclassPrediction,
    classify_crop,
    describe_illustration,
    train_subclassifier,
)
from .pipeline import PageRecord, emit_records, run_pipeline
from .splits import SplitAssignment, split_dataset

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "Crop",
    "DEFAULT_PROMPTS",
    "DROP",
    "DatasetManifest",
    "Detection",
    "DetectionDataset",
    "EvalReport",
    "F1CurvePoint",
    "IncunaError",
    "LabeledPage",
    "LayoutClass",
    "MatchResult",
    "OcrResult",
    "PageAnnotation",
    "PageImage",
    "PageRecord",
    "PictureSubclass",
    "RemapRule",
    "SemanticMatch",
    "SourceDocument",
    "SplitAssignment",
    "StubDetectorBackend",
    "SubclassPrediction",
    "TrainedDetector",
    "TrainingStrategy",
    "best_operating_point",
    "build_corpus",
    "cer",
    "classify_crop",
    "compare_engines",
    "default_remap",
    "describe_illustration",
    "detect_page",
    "emit_records",
    "extract_crops",
    "extract_pages",
    "f1",
    "f1_confidence_curve",
    "filter_detections",
    "iou",
    "match_detections",
    "parse_labels",
    "remap_dataset",
    "render_report",
    "run_ocr",
    "run_pipeline",
    "split_dataset",
    "train_detector",
    "train_subclassifier",
    "wer",
    "write_labels",
]
