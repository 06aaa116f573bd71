"""Acceptance suite: one test per criterion, each printing a pass line.

Run with `pytest tests/test_acceptance.py -v -s`. The trainability-smoke
tests need real model backends and patience; they are skipped unless
INCUNA_INTEGRATION=1 is set.
"""

from __future__ import annotations

import os
import random
import string
import time

import pytest

from incuna.annotations import LayoutClass
from incuna.config import validate_config
from incuna.crops import box_to_pixel_rect
from incuna.doclaynet import DROP, EXTERNAL_CATEGORIES, default_remap, remap_dataset
from incuna.evaluation import f1_confidence_curve, match_detections, sweep_counts
from incuna.ocr import levenshtein
from incuna.pipeline import run_pipeline, validate_page_record
from incuna.splits import split_dataset

from conftest import make_manifest, manifest_without_files, random_box, random_instance
from oracles import edit_distance_oracle, naive_curve
from test_doclaynet import EXPECTED_RULE, ann, coco_doc, one_image

PAGE = manifest_without_files(1).pages[0]


def report(name: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {name}: PASS{suffix}")


def test_evaluation_oracle_equivalence():
    """Curve output equals the naive per-threshold reimplementation exactly,
    over >= 1000 random corpora, in under 60 s."""
    rng = random.Random(0xE0A1)
    started = time.perf_counter()
    corpora = 0
    while corpora < 1000:
        n_pages = rng.randint(1, 5)
        instances = [random_instance(rng, PAGE, max_boxes=20) for _ in range(n_pages)]
        dets_per_page = [dets for dets, _ in instances]
        gts_per_page = [gts for _, gts in instances]
        if not any(gts.regions for gts in gts_per_page):
            continue
        iou_thr = rng.choice([0.3, 0.5, 0.5, 0.75])
        expected = naive_curve(dets_per_page, gts_per_page, iou_thr)
        got_counts = sweep_counts(dets_per_page, gts_per_page, iou_thr)
        got_curve = f1_confidence_curve(dets_per_page, gts_per_page, iou_thr)
        assert len(expected) == len(got_counts) == len(got_curve) >= 2
        for want, sweep, point in zip(expected, got_counts, got_curve):
            assert sweep.threshold == want["threshold"] == point.threshold
            assert sweep.counts == want["counts"]  # integer counts, exact
            assert set(point.per_class_f1) == set(want["per_class_f1"])
            for klass, value in want["per_class_f1"].items():
                assert abs(point.per_class_f1[klass] - value) <= 1e-12
            assert abs(point.mean_f1 - want["mean_f1"]) <= 1e-12
        corpora += 1
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"oracle equivalence took {elapsed:.1f}s"
    report("evaluation-oracle-equivalence", f"{corpora} corpora in {elapsed:.1f}s")


def test_matching_conservation():
    """Per class: tp + fn = |GT| and tp + fp = |kept detections|, >= 1000
    random instances."""
    rng = random.Random(0xC0); checked = 0
    for _ in range(1000):
        dets, gts = random_instance(rng, PAGE, max_boxes=20)
        threshold = rng.choice([0.0, 0.25, 0.5])
        kept = [d for d in dets if d.confidence >= threshold]
        result = match_detections(kept, gts, iou_threshold=0.5)
        gt_counts = gts.count_by_class()
        kept_counts: dict[LayoutClass, int] = {}
        for d in kept:
            kept_counts[d.klass] = kept_counts.get(d.klass, 0) + 1
        for klass in LayoutClass:
            tp, fp, fn = result.counts(klass)
            assert tp + fn == gt_counts.get(klass, 0)
            assert tp + fp == kept_counts.get(klass, 0)
        checked += 1
    report("matching-conservation", f"{checked} instances")


def test_remap_conservation_and_rule_table():
    """Known per-category counts: output = input - dropped, and the full
    11-entry rule table holds."""
    rule = default_remap()
    assert set(rule.mapping) == set(EXTERNAL_CATEGORIES) and len(EXTERNAL_CATEGORIES) == 11
    for category, target in EXPECTED_RULE.items():
        assert rule.target(category) is target, f"rule mismatch for {category}"

    rng = random.Random(0xD0C)
    per_category = {name: rng.randint(3, 12) for name in EXTERNAL_CATEGORIES}
    boxes = []
    i = 0
    for name, count in per_category.items():
        for _ in range(count):
            boxes.append(ann(i, 1 + i % 4, name, [5 + i % 50, 5, 40, 30]))
            i += 1
    images = [one_image(k) for k in range(1, 5)]
    annotations, rep = remap_dataset(coco_doc(images, boxes), rule)

    dropped_expected = {
        name: per_category[name] for name in per_category if EXPECTED_RULE[name] is DROP
    }
    assert rep.input_count == sum(per_category.values())
    assert rep.dropped_by_category == dropped_expected
    assert rep.dropped_degenerate == 0
    assert rep.output_count == rep.input_count - rep.dropped_total
    assert sum(len(a.regions) for a in annotations) == rep.output_count
    report(
        "remap-conservation",
        f"{rep.input_count} boxes, {rep.dropped_total} dropped over 11 categories",
    )


def test_split_exactness_and_determinism():
    """500 pages at (0.8, 0.1, 0.1) give exactly 400/50/50; five runs with one
    seed agree."""
    manifest = manifest_without_files(500)
    runs = [split_dataset(manifest, (0.8, 0.1, 0.1), seed=1234) for _ in range(5)]
    assert runs[0].counts() == {"train": 400, "val": 50, "test": 50}
    for run in runs[1:]:
        assert run.assignments == runs[0].assignments
    assert sorted(runs[0].assignments) == sorted(manifest.page_keys())
    report("split-exactness-determinism", "400/50/50, 5 identical runs")


def test_crop_geometry_bounds_and_roundtrip():
    """Randomized boxes (edge-straddling included): rects inside the page,
    unclamped edges within 1 px of the exact fractional position."""
    rng = random.Random(0x6E0)
    checked = 0
    for _ in range(2000):
        width, height = rng.randint(16, 3000), rng.randint(16, 3000)
        pad = rng.choice([0, 0, 0, 2, 7])
        box = random_box(rng)
        x0, y0, x1, y1 = box_to_pixel_rect(box, width, height, pad_px=pad)
        assert 0 <= x0 <= x1 <= width and 0 <= y0 <= y1 <= height
        exact = (
            box.x0 * width - pad,
            box.y0 * height - pad,
            box.x1 * width + pad,
            box.y1 * height + pad,
        )
        for pixel, ideal, bound in zip((x0, y0, x1, y1), exact, (width, height) * 2):
            if 0 < pixel < bound:
                assert abs(pixel - ideal) <= 1.0
            else:
                assert pixel in (0, bound)
        checked += 1
    report("crop-geometry", f"{checked} random boxes")


def test_cer_oracle_equivalence():
    """Edit distance equals a brute-force DP oracle on >= 1000 random pairs."""
    rng = random.Random(0xCE5)
    alphabet = string.ascii_lowercase[:8] + " "
    for _ in range(1000):
        a = "".join(rng.choices(alphabet, k=rng.randint(0, 30)))
        b = "".join(rng.choices(alphabet, k=rng.randint(0, 30)))
        assert levenshtein(a, b) == edit_distance_oracle(a, b)
    report("cer-oracle", "1000 pairs, exact")


def test_hermetic_end_to_end(tmp_path):
    """Full run with stub backends over a 5-page corpus: 5 schema-valid
    records, referential integrity, deterministic content, < 30 s."""
    started = time.perf_counter()
    raw = {
        "corpus_root": str(tmp_path / "corpus"),
        "output_root": str(tmp_path / "out"),
        "detector": {"name": "stub", "synthesize": True},
        "classifier": {"name": "stub", "logits": {"Illustration": 4.0}},
        "scorer": {"name": "stub"},
        "ocr_engines": [{"name": "stub", "fixed_text": "in principio"}],
        "thresholds": {"confidence": 0.35, "iou": 0.5},
    }
    cfg = validate_config(raw)
    manifest = make_manifest(tmp_path / "corpus", 5)

    records, summary = run_pipeline(cfg, manifest=manifest)
    assert len(records) == 5 and summary.pages_partial == 0
    for record in records:
        validate_page_record(record.to_dict())
        assert record.provenance["config_hash"] == cfg.config_hash

    again_cfg = validate_config(raw)
    assert again_cfg.config_hash == cfg.config_hash
    again, _ = run_pipeline(again_cfg, manifest=manifest)

    def content(record):
        out = record.to_dict()
        out["provenance"] = {
            k: v for k, v in out["provenance"].items() if k != "timestamps"
        }
        return out

    assert [content(r) for r in records] == [content(r) for r in again]
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"end-to-end took {elapsed:.1f}s"
    report("hermetic-end-to-end", f"5 records, deterministic, {elapsed:.1f}s")


_INTEGRATION = os.environ.get("INCUNA_INTEGRATION") == "1"


@pytest.mark.integration
@pytest.mark.skipif(not _INTEGRATION, reason="set INCUNA_INTEGRATION=1 to run")
def test_trainability_smoke_detector():
    """Optional: a real trainable detector fine-tuned on separable rectangles
    reaches mean F1 >= 0.9. Needs a real detector backend wired in via the
    detector config (module:Class path); none ships with this package."""
    pytest.importorskip(
        "ultralytics", reason="no real detector backend available in this environment"
    )
    pytest.skip(
        "a real detector backend is importable but no adapter is wired; "
        "point detector.name at a module:Class adapter and extend this test"
    )


@pytest.mark.integration
@pytest.mark.skipif(not _INTEGRATION, reason="set INCUNA_INTEGRATION=1 to run")
def test_trainability_smoke_subclassifier(tmp_path):
    """Optional: the torchvision residual-network backend reaches >= 0.95
    held-out accuracy on separable textures."""
    pytest.importorskip("torch")
    pytest.importorskip("torchvision")
    from incuna.pictures import TorchClassifierBackend, train_subclassifier
    from test_pictures import labeled_textures

    labeled = labeled_textures(tmp_path, per_class=15, seed=3)
    _, accuracy = train_subclassifier(
        TorchClassifierBackend(),
        labeled,
        hyperparams={"image_size": 32, "epochs": 20, "lr": 3e-3, "batch_size": 25},
        seed=11,
    )
    assert accuracy is not None and accuracy >= 0.95
    report("trainability-smoke-subclassifier", f"holdout accuracy {accuracy:.3f}")
