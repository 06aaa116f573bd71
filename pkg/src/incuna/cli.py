"""Command-line entry point: config-driven pipeline stages.

Exit codes: 0 success, 1 validation error, 2 run finished with partial
pages, 3 fatal I/O problem.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .annotations import LayoutClass
from .config import PipelineConfig, load_config
from .corpus import DatasetManifest, SourceDocument
from .crops import Crop, extract_crops
from .detection import (
    Detection,
    DetectionDataset,
    TrainedDetector,
    TrainingStrategy,
    create_detector_backend,
    detect_page,
    filter_detections,
    load_page_annotations,
    train_detector,
)
from .doclaynet import default_remap, export_labels, remap_dataset
from .errors import IncunaError, IngestError, ValidationError
from .evaluation import EvalReport, curve_to_csv, f1_confidence_curve, render_report
from .ingest import build_corpus, probe_page_count
from .ocr import create_ocr_engine, run_ocr, save_transcriptions
from .pictures import (
    DEFAULT_PROMPTS,
    TrainedClassifier,
    classify_crop,
    create_classifier_backend,
    create_scorer_backend,
    describe_illustration,
    load_labeled_crops,
    prompts_from_texts,
    train_subclassifier,
)
from .pipeline import emit_records, run_pipeline
from .splits import split_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARTIAL = 2
EXIT_IO = 3


def _manifest(cfg: PipelineConfig) -> DatasetManifest:
    path = cfg.corpus_root / "manifest.json"
    if not path.is_file():
        raise ValidationError([f"no manifest at {path}; run `incuna ingest` first"])
    return DatasetManifest.load(path, root=cfg.corpus_root)


def _load_detector(cfg: PipelineConfig) -> TrainedDetector:
    backend = create_detector_backend(cfg["detector"])
    state_path = cfg["detector"].get("state_path")
    if state_path:
        return TrainedDetector.load(state_path, backend)
    return TrainedDetector(backend=backend, state=None)


def _detections_path(cfg: PipelineConfig) -> Path:
    return cfg.output_root / "detections.json"


def _crop_index_path(cfg: PipelineConfig) -> Path:
    return cfg.output_root / "crops_index.json"


def _save_detections(path: Path, per_page: dict[str, list[Detection]]) -> None:
    payload = {
        key: [
            {
                "class": det.klass.name,
                "cx": det.box.cx,
                "cy": det.box.cy,
                "w": det.box.w,
                "h": det.box.h,
                "confidence": det.confidence,
            }
            for det in dets
        ]
        for key, dets in per_page.items()
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _load_detections(path: Path) -> dict[str, list[Detection]]:
    from .annotations import BoundingBox

    payload = json.loads(path.read_text(encoding="utf-8"))
    return {
        key: [
            Detection(
                klass=LayoutClass.from_name(row["class"]),
                box=BoundingBox(row["cx"], row["cy"], row["w"], row["h"]),
                confidence=row["confidence"],
            )
            for row in rows
        ]
        for key, rows in payload.items()
    }


def _save_crop_index(path: Path, crops: list[Crop]) -> None:
    payload = [
        {
            "doc_id": c.doc_id,
            "page_number": c.page_number,
            "class": c.klass.name,
            "rect": list(c.pixel_rect),
            "confidence": c.confidence,
            "path": str(c.path),
            "detection_index": c.detection_index,
        }
        for c in crops
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _load_crop_index(path: Path) -> list[Crop]:
    payload = json.loads(path.read_text(encoding="utf-8"))
    return [
        Crop(
            doc_id=row["doc_id"],
            page_number=row["page_number"],
            klass=LayoutClass.from_name(row["class"]),
            pixel_rect=tuple(row["rect"]),
            confidence=row["confidence"],
            path=Path(row["path"]),
            detection_index=row["detection_index"],
        )
        for row in payload
    ]


# -- subcommands -------------------------------------------------------------


def cmd_ingest(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    docs = []
    for s in cfg["sources"]:
        try:
            count = probe_page_count(s["path"])
        except IncunaError as exc:
            raise IngestError(s["doc_id"], str(exc)) from exc
        docs.append(
            SourceDocument(doc_id=s["doc_id"], source_path=Path(s["path"]), page_count=count)
        )
    if not docs:
        raise ValidationError(["config has no sources to ingest"])
    manifest = build_corpus(
        docs,
        max_pages=cfg["ingest"]["max_pages"],
        dpi=cfg["ingest"]["dpi"],
        out_root=cfg.corpus_root,
        workers=cfg["workers"],
    )
    manifest.save(cfg.corpus_root / "manifest.json")
    print(f"ingested {len(manifest)} pages from {len(docs)} documents into {cfg.corpus_root}")
    return EXIT_OK


def cmd_remap(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    annotations, report = remap_dataset(Path(args.coco), default_remap())
    out_dir = Path(args.out) if args.out else cfg.output_root / "external_labels"
    export_labels(annotations, out_dir)
    report_path = Path(args.report) if args.report else cfg.output_root / "remap_report.json"
    report.save(report_path)
    print(
        f"remapped {report.input_count} boxes -> {report.output_count} "
        f"(dropped {report.dropped_total}); labels in {out_dir}"
    )
    return EXIT_OK


def cmd_split(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    manifest = _manifest(cfg)
    assignment = split_dataset(
        manifest,
        ratios=cfg.split_ratios,
        seed=cfg["split"]["seed"],
        stratify_by_document=cfg["split"]["stratify_by_document"],
    )
    out = cfg.output_root / "split.json"
    assignment.save(out)
    print(f"split {len(manifest)} pages {assignment.counts()} -> {out}")
    return EXIT_OK


def cmd_train(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    manifest = _manifest(cfg)
    custom = DetectionDataset(
        name=f"custom:{cfg.corpus_root}", items=load_page_annotations(manifest.pages)
    )
    strategy_name = args.strategy or cfg["detector"].get("strategy", "CustomOnly")
    strategy = TrainingStrategy[strategy_name]
    external = None
    if args.external:
        ext_root = Path(args.external)
        ext_manifest = DatasetManifest.load(ext_root / "manifest.json", root=ext_root)
        external = DetectionDataset(
            name=f"external:{ext_root}", items=load_page_annotations(ext_manifest.pages)
        )
    backend = create_detector_backend(cfg["detector"])
    trained = train_detector(
        backend,
        strategy,
        custom_data=custom,
        external_data=external,
        hyperparams=cfg["detector"].get("hyperparams", {}),
        log_path=cfg.output_root / "training_log.jsonl",
    )
    state_path = cfg.output_root / "detector_state.json"
    trained.save(state_path)
    print(f"trained {backend.model_name} ({strategy.name}); state -> {state_path}")
    return EXIT_OK


def cmd_detect(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    manifest = _manifest(cfg)
    detector = _load_detector(cfg)
    per_page = {}
    for page in sorted(manifest.pages, key=lambda p: p.key):
        dets = detect_page(detector, page)
        if args.filter:
            dets = filter_detections(dets, cfg.confidence_threshold)
        per_page[f"{page.doc_id}:{page.page_number}"] = dets
    out = _detections_path(cfg)
    _save_detections(out, per_page)
    total = sum(len(v) for v in per_page.values())
    print(f"detected {total} regions over {len(per_page)} pages -> {out}")
    return EXIT_OK


def cmd_crop(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    manifest = _manifest(cfg)
    per_page = _load_detections(_detections_path(cfg))
    classes = {LayoutClass.from_name(name) for name in args.classes.split(",")}
    crops: list[Crop] = []
    for page in sorted(manifest.pages, key=lambda p: p.key):
        dets = per_page.get(f"{page.doc_id}:{page.page_number}", [])
        crops.extend(
            extract_crops(
                page,
                dets,
                classes,
                pad_px=cfg["crop"]["pad_px"],
                out_root=cfg.output_root / "crops",
            )
        )
    _save_crop_index(_crop_index_path(cfg), crops)
    print(f"saved {len(crops)} crops under {cfg.output_root / 'crops'}")
    return EXIT_OK


def cmd_ocr(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    crops = [
        c
        for c in _load_crop_index(_crop_index_path(cfg))
        if c.klass in (LayoutClass.Text, LayoutClass.Title)
    ]
    engines = [create_ocr_engine(e) for e in cfg["ocr_engines"]]
    results = []
    for crop in crops:
        for engine in engines:
            result = run_ocr(crop, engine)
            Path(crop.path).with_suffix(".txt").write_text(result.text, encoding="utf-8")
            results.append(result)
    out = cfg.output_root / "transcriptions.json"
    save_transcriptions(results, out)
    print(f"transcribed {len(crops)} crops with {len(engines)} engine(s) -> {out}")
    return EXIT_OK


def cmd_classify(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    crops = [
        c for c in _load_crop_index(_crop_index_path(cfg)) if c.klass is LayoutClass.Picture
    ]
    backend = create_classifier_backend(cfg["classifier"])
    if args.labeled:
        trained, accuracy = train_subclassifier(
            backend, load_labeled_crops(args.labeled), seed=cfg["split"]["seed"]
        )
        if accuracy is not None:
            print(f"subclassifier held-out accuracy: {accuracy:.4f}")
    else:
        trained = TrainedClassifier(backend=backend, state=None)
    out = cfg.output_root / "subclasses.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["crop", "subclass"])
        for crop in crops:
            prediction = classify_crop(trained, crop)
            writer.writerow([crop.ref, prediction.subclass.name])
    print(f"classified {len(crops)} picture crops -> {out}")
    return EXIT_OK


def cmd_describe(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    subclass_by_ref = {}
    subclasses_csv = cfg.output_root / "subclasses.csv"
    if subclasses_csv.is_file():
        for line in subclasses_csv.read_text(encoding="utf-8").splitlines()[1:]:
            ref, _, sub = line.partition(",")
            subclass_by_ref[ref] = sub
    crops = [
        c
        for c in _load_crop_index(_crop_index_path(cfg))
        if c.klass is LayoutClass.Picture and subclass_by_ref.get(c.ref) == "Illustration"
    ]
    scorer = create_scorer_backend(cfg["scorer"])
    prompts = prompts_from_texts(cfg["prompts"]) if cfg["prompts"] else DEFAULT_PROMPTS
    out = cfg.output_root / "descriptions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["crop", "description", "score"])
        for crop in crops:
            match = describe_illustration(scorer, crop, prompts)
            writer.writerow([crop.ref, match.top.text, f"{match.ranked[0][1]:.6f}"])
    print(f"described {len(crops)} illustrations -> {out}")
    return EXIT_OK


def cmd_evaluate(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    manifest = _manifest(cfg)
    per_page = _load_detections(_detections_path(cfg))
    labeled = load_page_annotations(sorted(manifest.pages, key=lambda p: p.key))
    dets_per_page = [
        per_page.get(f"{item.page.doc_id}:{item.page.page_number}", []) for item in labeled
    ]
    gts_per_page = [item.annotation for item in labeled]
    curve = f1_confidence_curve(dets_per_page, gts_per_page, iou_threshold=cfg.iou_threshold)
    report = EvalReport.from_curve(
        model_id=args.model_id, strategy=TrainingStrategy[args.strategy], curve=curve
    )
    out = cfg.output_root / "eval_report.json"
    report.save(out)
    (cfg.output_root / "f1_curve.csv").write_text(curve_to_csv(curve), encoding="utf-8")
    print(
        f"{report.model_id}({report.strategy.approach_number}): "
        f"best F1={report.best_mean_f1:.4f} @ {report.best_threshold:.3f} -> {out}"
    )
    return EXIT_OK


def cmd_run(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    records, summary = run_pipeline(cfg, manifest=_manifest(cfg))
    out_dir = cfg.output_root / "records"
    emit_records(records, out_dir, fmt="json")
    if args.csv:
        emit_records(records, out_dir, fmt="csv")
    (cfg.output_root / "run_summary.json").write_text(
        json.dumps(summary.to_dict(), indent=2), encoding="utf-8"
    )
    print(
        f"pipeline: {summary.pages_ok}/{summary.pages_total} pages ok, "
        f"{summary.detections_kept} regions, {summary.ocr_results} transcriptions, "
        f"{summary.classified} pictures classified, {summary.described} described"
    )
    return EXIT_PARTIAL if summary.pages_partial else EXIT_OK


def cmd_report(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    reports = [EvalReport.load(Path(p)) for p in args.reports]
    text = render_report(reports)
    out = cfg.output_root / "comparison.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    for report in reports:
        csv_path = cfg.output_root / f"curve_{report.model_id}_{report.strategy.name}.csv"
        csv_path.write_text(curve_to_csv(report.curve), encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="incuna",
        description="Layout analysis, OCR and picture enrichment for digitized early printed books.",
    )
    parser.add_argument("--config", type=Path, default=None, help="YAML/JSON config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="render source PDFs into the page-image corpus")

    p = sub.add_parser("remap", help="convert a COCO-style external dataset to label files")
    p.add_argument("--coco", required=True, help="COCO-format JSON file")
    p.add_argument("--out", default=None, help="label output directory")
    p.add_argument("--report", default=None, help="remap report path")

    sub.add_parser("split", help="deterministic train/val/test split of the manifest")

    p = sub.add_parser("train", help="train the detector backend")
    p.add_argument(
        "--strategy",
        choices=[s.name for s in TrainingStrategy],
        default=None,
        help="overrides detector.strategy from the config",
    )
    p.add_argument("--external", default=None, help="external corpus root (for pretraining)")

    p = sub.add_parser("detect", help="run the detector over the corpus")
    p.add_argument("--filter", action="store_true", help="apply the confidence threshold")

    p = sub.add_parser("crop", help="cut region crops from saved detections")
    p.add_argument("--classes", default="Text,Title,Picture", help="comma-separated class names")

    sub.add_parser("ocr", help="transcribe Text/Title crops")

    p = sub.add_parser("classify", help="subclassify Picture crops")
    p.add_argument("--labeled", default=None, help="picture_labels/<Subclass>/ training layout")

    sub.add_parser("describe", help="zero-shot descriptions for Illustration crops")

    p = sub.add_parser("evaluate", help="F1-confidence curve of saved detections vs labels")
    p.add_argument("--model-id", default="detector")
    p.add_argument(
        "--strategy",
        choices=[s.name for s in TrainingStrategy],
        default=TrainingStrategy.CustomOnly.name,
    )

    p = sub.add_parser("run", help="full pipeline: detect, route, OCR, classify, describe")
    p.add_argument("--csv", action="store_true", help="also emit the flattened CSV")

    p = sub.add_parser("report", help="comparison table over saved eval reports")
    p.add_argument("reports", nargs="+", help="eval report JSON files")

    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "remap": cmd_remap,
    "split": cmd_split,
    "train": cmd_train,
    "detect": cmd_detect,
    "crop": cmd_crop,
    "ocr": cmd_ocr,
    "classify": cmd_classify,
    "describe": cmd_describe,
    "evaluate": cmd_evaluate,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except ValidationError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IncunaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
