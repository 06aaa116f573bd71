"""End-to-end page enrichment: detect, route, transcribe, subclassify,
describe, and emit one metadata record per page.

Failures are page-scoped: a page that breaks mid-chain is emitted as a
partial record and the run continues, because an archival batch should not
abort on one corrupt scan.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .annotations import LayoutClass
from .config import PipelineConfig
from .corpus import DatasetManifest, PageImage
from .crops import extract_crops
from .detection import (
    TrainedDetector,
    create_detector_backend,
    detect_page,
    filter_detections,
)
from .errors import IncunaError
from .evaluation import EvalReport
from .ocr import OCR_CLASSES, create_ocr_engine, run_ocr
from .pictures import (
    DEFAULT_PROMPTS,
    PictureSubclass,
    TrainedClassifier,
    classify_crop,
    create_classifier_backend,
    create_scorer_backend,
    describe_illustration,
    prompts_from_texts,
)

logger = logging.getLogger(__name__)

PAGE_RECORD_SCHEMA: dict = {
    "type": "object",
    "required": ["doc_id", "page_number", "detections", "texts", "pictures", "provenance"],
    "additionalProperties": False,
    "properties": {
        "doc_id": {"type": "string", "minLength": 1},
        "page_number": {"type": "integer", "minimum": 1},
        "detections": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "class", "box", "confidence"],
                "additionalProperties": False,
                "properties": {
                    "index": {"type": "integer", "minimum": 0},
                    "class": {"enum": [k.name for k in LayoutClass]},
                    "box": {
                        "type": "object",
                        "required": ["cx", "cy", "w", "h"],
                        "additionalProperties": False,
                        "properties": {
                            "cx": {"type": "number", "minimum": 0, "maximum": 1},
                            "cy": {"type": "number", "minimum": 0, "maximum": 1},
                            "w": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                            "h": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        },
                    },
                    "confidence": {"type": "number", "minimum": 0, "maximum": 1},
                },
            },
        },
        "texts": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["region", "engine", "text"],
                "additionalProperties": False,
                "properties": {
                    "region": {"type": "integer", "minimum": 0},
                    "engine": {"type": "string"},
                    "text": {"type": "string"},
                },
            },
        },
        "pictures": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["region", "subclass"],
                "additionalProperties": False,
                "properties": {
                    "region": {"type": "integer", "minimum": 0},
                    "subclass": {"enum": [s.name for s in PictureSubclass]},
                    "description": {"type": "string"},
                    "score": {"type": "number"},
                },
            },
        },
        "provenance": {
            "type": "object",
            "required": ["models", "config_hash", "timestamps"],
            "additionalProperties": False,
            "properties": {
                "models": {"type": "object"},
                "config_hash": {"type": "string"},
                "timestamps": {
                    "type": "object",
                    "properties": {
                        "started": {"type": "string"},
                        "finished": {"type": "string"},
                    },
                },
            },
        },
        "partial": {"type": "boolean"},
        "errors": {"type": "array", "items": {"type": "string"}},
    },
}


@dataclass
class PageRecord:
    """The per-page enrichment document the pipeline emits."""

    doc_id: str
    page_number: int
    detections: list[dict] = field(default_factory=list)
    texts: list[dict] = field(default_factory=list)
    pictures: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    partial: bool = False
    errors: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "doc_id": self.doc_id,
            "page_number": self.page_number,
            "detections": self.detections,
            "texts": self.texts,
            "pictures": self.pictures,
            "provenance": self.provenance,
        }
        if self.partial or self.errors:
            out["partial"] = self.partial
            out["errors"] = self.errors
        return out


def validate_page_record(record: dict) -> None:
    """Schema plus referential integrity: every texts/pictures entry must
    resolve to a detection of the right class in the same record."""
    jsonschema.validate(record, PAGE_RECORD_SCHEMA)
    by_index = {d["index"]: d for d in record["detections"]}
    for entry in record["texts"]:
        det = by_index.get(entry["region"])
        if det is None or det["class"] not in ("Text", "Title"):
            raise ValueError(
                f"texts entry references region {entry['region']}, which is not a "
                f"Text/Title detection"
            )
    for entry in record["pictures"]:
        det = by_index.get(entry["region"])
        if det is None or det["class"] != "Picture":
            raise ValueError(
                f"pictures entry references region {entry['region']}, which is not a "
                f"Picture detection"
            )
        if "description" in entry and entry["subclass"] != "Illustration":
            raise ValueError(
                f"pictures entry for region {entry['region']} carries a description "
                f"but is {entry['subclass']}, not Illustration"
            )


@dataclass
class RunSummary:
    """Per-stage counters; routed counts reconcile with emitted entries."""

    pages_total: int = 0
    pages_ok: int = 0
    pages_partial: int = 0
    detections_kept: int = 0
    text_regions_routed: int = 0
    ocr_results: int = 0
    picture_regions_routed: int = 0
    classified: int = 0
    described: int = 0
    page_errors: dict[str, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pages_total": self.pages_total,
            "pages_ok": self.pages_ok,
            "pages_partial": self.pages_partial,
            "detections_kept": self.detections_kept,
            "text_regions_routed": self.text_regions_routed,
            "ocr_results": self.ocr_results,
            "picture_regions_routed": self.picture_regions_routed,
            "classified": self.classified,
            "described": self.described,
            "page_errors": self.page_errors,
        }


@dataclass
class _Stages:
    """Backends and settings resolved once per run, shared across pages."""

    detector: TrainedDetector
    classifier: TrainedClassifier | None
    scorer: object
    engines: list
    prompts: tuple
    confidence: float
    pad_px: int
    crops_root: Path
    toggles: dict[str, bool]
    provenance_models: dict


def _resolve_stages(cfg: PipelineConfig, detector: TrainedDetector | None) -> _Stages:
    if detector is None:
        backend = create_detector_backend(cfg["detector"])
        state_path = cfg["detector"].get("state_path")
        if state_path:
            detector = TrainedDetector.load(state_path, backend)
        else:
            detector = TrainedDetector(backend=backend, state=None)

    classifier = None
    if cfg["stages"]["classify"]:
        backend = create_classifier_backend(cfg["classifier"])
        classifier = TrainedClassifier(backend=backend, state=None)

    scorer = create_scorer_backend(cfg["scorer"]) if cfg["stages"]["describe"] else None
    engines = [create_ocr_engine(e) for e in cfg["ocr_engines"]] if cfg["stages"]["ocr"] else []
    prompts = prompts_from_texts(cfg["prompts"]) if cfg["prompts"] else DEFAULT_PROMPTS

    confidence = cfg.confidence_threshold
    if cfg["eval_report"]:
        report = EvalReport.load(cfg["eval_report"])
        confidence = report.best_threshold
        logger.info(
            "operating point from eval report %s: confidence %.3f",
            cfg["eval_report"],
            confidence,
        )

    models = {
        "detector": detector.backend.model_name,
        "ocr_engines": [e.engine_name for e in engines],
        "classifier": classifier.backend.name if classifier else None,
        "scorer": getattr(scorer, "name", None) if scorer else None,
    }
    return _Stages(
        detector=detector,
        classifier=classifier,
        scorer=scorer,
        engines=engines,
        prompts=prompts,
        confidence=confidence,
        pad_px=int(cfg["crop"]["pad_px"]),
        crops_root=cfg.output_root / "crops",
        toggles=cfg.stage_enabled,
        provenance_models=models,
    )


def _box_dict(det) -> dict:
    return {"cx": det.box.cx, "cy": det.box.cy, "w": det.box.w, "h": det.box.h}


def _process_page(page: PageImage, stages: _Stages, config_hash: str) -> PageRecord:
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    record = PageRecord(doc_id=page.doc_id, page_number=page.page_number)

    try:
        kept = filter_detections(detect_page(stages.detector, page), stages.confidence)
        record.detections = [
            {
                "index": i,
                "class": det.klass.name,
                "box": _box_dict(det),
                "confidence": det.confidence,
            }
            for i, det in enumerate(kept)
        ]

        if stages.toggles["ocr"] and stages.engines:
            text_crops = extract_crops(
                page, kept, OCR_CLASSES, pad_px=stages.pad_px, out_root=stages.crops_root
            )
            for crop in text_crops:
                for engine in stages.engines:
                    try:
                        result = run_ocr(crop, engine)
                    except IncunaError as exc:
                        record.partial = True
                        record.errors.append(str(exc))
                        continue
                    Path(crop.path).with_suffix(".txt").write_text(
                        result.text, encoding="utf-8"
                    )
                    record.texts.append(
                        {
                            "region": crop.detection_index,
                            "engine": result.engine_name,
                            "text": result.text,
                        }
                    )

        if stages.toggles["classify"] and stages.classifier is not None:
            picture_crops = extract_crops(
                page,
                kept,
                {LayoutClass.Picture},
                pad_px=stages.pad_px,
                out_root=stages.crops_root,
            )
            for crop in picture_crops:
                prediction = classify_crop(stages.classifier, crop)
                entry: dict = {
                    "region": crop.detection_index,
                    "subclass": prediction.subclass.name,
                }
                wants_description = (
                    stages.toggles["describe"]
                    and stages.scorer is not None
                    and prediction.subclass is PictureSubclass.Illustration
                )
                if wants_description:
                    match = describe_illustration(stages.scorer, crop, stages.prompts)
                    entry["description"] = match.top.text
                    entry["score"] = match.ranked[0][1]
                record.pictures.append(entry)
    except Exception as exc:  # page-scoped: record and continue the batch
        logger.exception("page %s p%d failed", page.doc_id, page.page_number)
        record.partial = True
        record.errors.append(str(exc))

    record.provenance = {
        "models": stages.provenance_models,
        "config_hash": config_hash,
        "timestamps": {"started": started, "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z")},
    }
    return record


def run_pipeline(
    cfg: PipelineConfig,
    manifest: DatasetManifest | None = None,
    detector: TrainedDetector | None = None,
) -> tuple[list[PageRecord], RunSummary]:
    """Run detection, routing, OCR, classification and description over
    every manifest page.

    Records come back sorted by (doc_id, page_number) regardless of worker
    scheduling, so output is deterministic for deterministic backends.
    """
    if manifest is None:
        manifest = DatasetManifest.load(cfg.corpus_root / "manifest.json", root=cfg.corpus_root)
    stages = _resolve_stages(cfg, detector)

    pages = sorted(manifest.pages, key=lambda p: p.key)
    workers = int(cfg["workers"])
    if workers > 1 and len(pages) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda p: _process_page(p, stages, cfg.config_hash), pages))
    else:
        records = [_process_page(p, stages, cfg.config_hash) for p in pages]

    summary = RunSummary(pages_total=len(records))
    for record in records:
        if record.partial:
            summary.pages_partial += 1
            summary.page_errors[f"{record.doc_id}:{record.page_number}"] = record.errors
        else:
            summary.pages_ok += 1
        summary.detections_kept += len(record.detections)
        summary.text_regions_routed += sum(
            1 for d in record.detections if d["class"] in ("Text", "Title")
        )
        summary.ocr_results += len(record.texts)
        summary.picture_regions_routed += sum(
            1 for d in record.detections if d["class"] == "Picture"
        )
        summary.classified += len(record.pictures)
        summary.described += sum(1 for e in record.pictures if "description" in e)
    return records, summary


def emit_records(
    records: list[PageRecord],
    out_dir: Path | str,
    fmt: str = "json",
) -> list[Path]:
    """Write records to disk.

    json: one document per page plus an index file. csv: one flattened row
    per detected region (with multiple OCR engines only the first engine's
    text fits the row; JSON keeps everything). Every record is
    schema-validated before anything is written.
    """
    for record in records:
        validate_page_record(record.to_dict())
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if fmt == "json":
        index = {"pages": [], "count": len(records)}
        for record in records:
            name = f"{record.doc_id}_p{record.page_number:04d}.json"
            path = out_dir / name
            path.write_text(
                json.dumps(record.to_dict(), indent=2, ensure_ascii=False, sort_keys=True),
                encoding="utf-8",
            )
            written.append(path)
            index["pages"].append(
                {"doc_id": record.doc_id, "page_number": record.page_number, "record": name}
            )
        index_path = out_dir / "index.json"
        index_path.write_text(json.dumps(index, indent=2, sort_keys=True), encoding="utf-8")
        written.append(index_path)
        return written

    if fmt == "csv":
        path = out_dir / "records.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                [
                    "doc_id",
                    "page_number",
                    "region",
                    "class",
                    "cx",
                    "cy",
                    "w",
                    "h",
                    "confidence",
                    "engine",
                    "text",
                    "subclass",
                    "description",
                    "score",
                ]
            )
            for record in records:
                texts_by_region: dict[int, list[dict]] = {}
                for entry in record.texts:
                    texts_by_region.setdefault(entry["region"], []).append(entry)
                pictures_by_region = {e["region"]: e for e in record.pictures}
                for det in record.detections:
                    text_entries = texts_by_region.get(det["index"], [])
                    picture = pictures_by_region.get(det["index"], {})
                    writer.writerow(
                        [
                            record.doc_id,
                            record.page_number,
                            det["index"],
                            det["class"],
                            det["box"]["cx"],
                            det["box"]["cy"],
                            det["box"]["w"],
                            det["box"]["h"],
                            det["confidence"],
                            text_entries[0]["engine"] if text_entries else "",
                            text_entries[0]["text"] if text_entries else "",
                            picture.get("subclass", ""),
                            picture.get("description", ""),
                            picture.get("score", ""),
                        ]
                    )
        return [path]

    raise ValueError(f"unknown emit format {fmt!r}")
