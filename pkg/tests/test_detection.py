from __future__ import annotations

import json
import random

import pytest

from incuna.annotations import BoundingBox, LayoutClass, PageAnnotation
from incuna.detection import (
    Detection,
    DetectionDataset,
    LabeledPage,
    StubDetectorBackend,
    TrainedDetector,
    TrainingStrategy,
    create_detector_backend,
    detect_page,
    filter_detections,
    load_page_annotations,
    train_detector,
)
from incuna.errors import BackendError, DetectionError, ValidationError
from incuna.evaluation import best_operating_point, f1_confidence_curve

from conftest import manifest_without_files, random_box

PAGES = manifest_without_files(6).pages


def dataset(pages, rng: random.Random, name="synthetic") -> DetectionDataset:
    items = []
    for page in pages:
        regions = [
            (LayoutClass(rng.randrange(5)), random_box(rng)) for _ in range(rng.randint(1, 6))
        ]
        items.append(LabeledPage(page=page, annotation=PageAnnotation(page=page, regions=regions)))
    return DetectionDataset(name=name, items=items)


def det(conf, klass=LayoutClass.Text) -> Detection:
    return Detection(klass=klass, box=BoundingBox(0.5, 0.5, 0.2, 0.2), confidence=conf)


class TestTrainingStrategy:
    def test_approach_numbers(self):
        assert TrainingStrategy.PretrainThenFinetune.approach_number == 1
        assert TrainingStrategy.CustomOnly.approach_number == 2


class TestTrainDetector:
    def test_custom_only_reaches_high_f1_on_training_pages(self):
        rng = random.Random(0)
        data = dataset(PAGES, rng)
        trained = train_detector(StubDetectorBackend(), TrainingStrategy.CustomOnly, data)
        dets_per_page = [detect_page(trained, item.page) for item in data.items]
        gts_per_page = [item.annotation for item in data.items]
        curve = f1_confidence_curve(dets_per_page, gts_per_page)
        _, best_f1 = best_operating_point(curve)
        assert best_f1 >= 0.9

    def test_pretrain_without_external_is_config_error(self):
        data = dataset(PAGES, random.Random(1))
        with pytest.raises(ValidationError, match="external_data"):
            train_detector(StubDetectorBackend(), TrainingStrategy.PretrainThenFinetune, data)

    def test_custom_only_with_external_is_config_error(self):
        data = dataset(PAGES, random.Random(1))
        with pytest.raises(ValidationError, match="CustomOnly"):
            train_detector(
                StubDetectorBackend(), TrainingStrategy.CustomOnly, data, external_data=data
            )

    def test_pretrain_then_finetune_logs_two_phases_in_order(self, tmp_path):
        rng = random.Random(2)
        custom = dataset(PAGES[:3], rng, name="custom")
        external = dataset(PAGES[3:], rng, name="external")
        log_path = tmp_path / "log.jsonl"
        trained = train_detector(
            StubDetectorBackend(),
            TrainingStrategy.PretrainThenFinetune,
            custom_data=custom,
            external_data=external,
            log_path=log_path,
        )
        assert [p["phase"] for p in trained.phases] == ["pretrain", "finetune"]
        assert [p["dataset"] for p in trained.phases] == ["external", "custom"]
        logged = [json.loads(line) for line in log_path.read_text().splitlines()]
        assert [r["phase"] for r in logged] == ["pretrain", "finetune"]

    def test_untrainable_backend_is_capability_error(self):
        backend = StubDetectorBackend()
        backend.trainable = False
        with pytest.raises(BackendError, match="not trainable"):
            train_detector(backend, TrainingStrategy.CustomOnly, dataset(PAGES, random.Random(3)))


class TestDetectPage:
    def test_blank_stub_returns_empty(self):
        trained = TrainedDetector(backend=StubDetectorBackend(), state=None)
        assert detect_page(trained, PAGES[0]) == []

    def test_preseeded_boxes_come_back_exactly(self):
        wanted = [det(0.8), det(0.5, LayoutClass.Picture)]
        backend = StubDetectorBackend(preset={"doc:1": wanted})
        trained = TrainedDetector(backend=backend, state=None)
        assert detect_page(trained, PAGES[0]) == wanted

    def test_sorted_by_confidence_descending(self):
        backend = StubDetectorBackend(preset={"doc:1": [det(0.2), det(0.9), det(0.5)]})
        trained = TrainedDetector(backend=backend, state=None)
        confs = [d.confidence for d in detect_page(trained, PAGES[0])]
        assert confs == [0.9, 0.5, 0.2]

    def test_deterministic_synthesis(self):
        trained = TrainedDetector(backend=StubDetectorBackend(synthesize=True), state=None)
        first = detect_page(trained, PAGES[0])
        assert first  # synthesizes something
        assert detect_page(trained, PAGES[0]) == first
        assert detect_page(trained, PAGES[1]) != first

    def test_backend_failure_carries_page_identity(self):
        class Exploding(StubDetectorBackend):
            def predict(self, state, page):
                raise RuntimeError("boom")

        trained = TrainedDetector(backend=Exploding(), state=None)
        with pytest.raises(DetectionError, match="doc p1"):
            detect_page(trained, PAGES[0])


class TestFilterDetections:
    def test_zero_threshold_keeps_everything(self):
        dets = [det(0.9), det(0.5), det(0.3)]
        assert filter_detections(dets, 0.0) == dets

    def test_threshold_one_keeps_only_exact_ones(self):
        dets = [det(1.0), det(0.999)]
        assert filter_detections(dets, 1.0) == [dets[0]]

    def test_boundary_is_inclusive(self):
        dets = [det(0.9), det(0.5), det(0.3)]
        assert filter_detections(dets, 0.5) == [dets[0], dets[1]]

    def test_antitone_in_threshold(self):
        rng = random.Random(4)
        dets = [det(round(rng.random(), 2)) for _ in range(50)]
        for t1, t2 in [(0.1, 0.5), (0.3, 0.31), (0.0, 1.0)]:
            low = filter_detections(dets, t1)
            high = filter_detections(dets, t2)
            assert set((d.confidence, id(d)) for d in high) <= set(
                (d.confidence, id(d)) for d in low
            )


class TestStatePersistence:
    def test_trained_state_roundtrips_through_disk(self, tmp_path):
        rng = random.Random(5)
        data = dataset(PAGES, rng)
        trained = train_detector(StubDetectorBackend(), TrainingStrategy.CustomOnly, data)
        path = tmp_path / "state.json"
        trained.save(path)
        loaded = TrainedDetector.load(path, StubDetectorBackend())
        for item in data.items:
            assert detect_page(loaded, item.page) == detect_page(trained, item.page)


class TestBackendFactory:
    def test_stub_by_name(self):
        backend = create_detector_backend({"name": "stub", "synthesize": True})
        assert backend.model_name == "stub" and backend.synthesize

    def test_default_is_stub(self):
        assert create_detector_backend(None).model_name == "stub"

    def test_dotted_path_loads(self):
        backend = create_detector_backend({"name": "incuna.detection:StubDetectorBackend"})
        assert isinstance(backend, StubDetectorBackend)

    def test_unknown_name_rejected(self):
        with pytest.raises(BackendError, match="unknown detector backend"):
            create_detector_backend({"name": "yolo11n"})

    def test_bad_dotted_path_rejected(self):
        with pytest.raises(BackendError, match="cannot load"):
            create_detector_backend({"name": "nonexistent.module:Thing"})

    def test_orchestration_keys_not_passed_to_constructor(self):
        backend = create_detector_backend(
            {
                "name": "stub",
                "state_path": "somewhere/state.json",
                "weights_path": "weights.pt",
                "hyperparams": {"epochs": 3},
            }
        )
        assert backend.model_name == "stub"


class TestLoadPageAnnotations:
    def test_reads_labels_beside_images(self, tmp_path):
        from conftest import make_page

        page = make_page(tmp_path, doc_id="d")
        page.path.with_suffix(".txt").write_text("2 0.5 0.5 0.2 0.2\n", encoding="utf-8")
        (item,) = load_page_annotations([page])
        assert item.annotation.regions[0][0] is LayoutClass.Picture

    def test_missing_label_file_means_empty_annotation(self, tmp_path):
        from conftest import make_page

        page = make_page(tmp_path, doc_id="d")
        (item,) = load_page_annotations([page])
        assert item.annotation.regions == []
