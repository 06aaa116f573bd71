"""Layout-detector backend contract, the two training strategies, and a
deterministic stub backend so the whole pipeline runs without model weights.

Real detector backends plug in through configuration (see
create_detector_backend); the bundled stub either memorizes ground truth
during "training", serves pre-seeded boxes, or synthesizes deterministic
boxes from the page identity.
"""

from __future__ import annotations

import hashlib
import importlib
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence

from .annotations import BoundingBox, LayoutClass, PageAnnotation
from .corpus import PageImage
from .errors import BackendError, DetectionError, ValidationError


@dataclass(frozen=True)
class Detection:
    """One predicted region with its confidence."""

    klass: LayoutClass
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


class TrainingStrategy(Enum):
    """The two ways a detector gets trained."""

    PretrainThenFinetune = "pretrain_then_finetune"
    CustomOnly = "custom_only"

    @property
    def approach_number(self) -> int:
        """1 = external pretraining then fine-tuning, 2 = custom data only."""
        return 1 if self is TrainingStrategy.PretrainThenFinetune else 2


@dataclass(frozen=True)
class LabeledPage:
    page: PageImage
    annotation: PageAnnotation


@dataclass
class DetectionDataset:
    """Named collection of labeled pages; the name is provenance identity."""

    name: str
    items: list[LabeledPage] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)


class DetectorBackend(Protocol):
    """Contract a detector implementation must satisfy."""

    model_name: str
    trainable: bool

    def fit(self, data: DetectionDataset, hyperparams: dict, state: Any | None) -> Any: ...

    def predict(self, state: Any, page: PageImage) -> list[Detection]: ...

    def dump_state(self, state: Any) -> dict: ...

    def load_state(self, payload: dict) -> Any: ...


@dataclass
class TrainedDetector:
    """An immutable trained state bound to the backend that produced it."""

    backend: DetectorBackend
    state: Any
    phases: list[dict] = field(default_factory=list)

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "backend": self.backend.model_name,
            "phases": self.phases,
            "state": self.backend.dump_state(self.state),
        }
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str, backend: DetectorBackend) -> "TrainedDetector":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            backend=backend,
            state=backend.load_state(payload["state"]),
            phases=payload.get("phases", []),
        )


def train_detector(
    backend: DetectorBackend,
    strategy: TrainingStrategy,
    custom_data: DetectionDataset,
    external_data: DetectionDataset | None = None,
    hyperparams: dict | None = None,
    log_path: Path | str | None = None,
) -> TrainedDetector:
    """Run the chosen training strategy and return a usable trained state.

    PretrainThenFinetune trains on the external dataset first and continues
    on the custom one; CustomOnly forbids external data. Each phase appends a
    provenance record (dataset identity, size, hyperparameters), optionally
    mirrored to a JSON-lines log file.
    """
    if not getattr(backend, "trainable", False):
        raise BackendError(f"backend {backend.model_name!r} is not trainable")
    if strategy is TrainingStrategy.PretrainThenFinetune and external_data is None:
        raise ValidationError(["strategy PretrainThenFinetune requires external_data"])
    if strategy is TrainingStrategy.CustomOnly and external_data is not None:
        raise ValidationError(["strategy CustomOnly does not accept external_data"])

    hyperparams = dict(hyperparams or {})
    if strategy is TrainingStrategy.PretrainThenFinetune:
        phases = [("pretrain", external_data), ("finetune", custom_data)]
    else:
        phases = [("train", custom_data)]

    state: Any = None
    records: list[dict] = []
    for phase_name, data in phases:
        state = backend.fit(data, hyperparams, state)
        records.append(
            {
                "phase": phase_name,
                "dataset": data.name,
                "size": len(data),
                "model": backend.model_name,
                "strategy": strategy.name,
                "hyperparams": hyperparams,
                "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            }
        )
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        with log_path.open("a", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record) + "\n")
    return TrainedDetector(backend=backend, state=state, phases=records)


def detect_page(trained: TrainedDetector, page: PageImage) -> list[Detection]:
    """Predict regions on one page, sorted by confidence descending."""
    try:
        dets = trained.backend.predict(trained.state, page)
    except Exception as exc:
        raise DetectionError(page.doc_id, page.page_number, str(exc)) from exc
    for det in dets:
        if not isinstance(det.klass, LayoutClass):
            raise DetectionError(
                page.doc_id, page.page_number, f"backend emitted non-layout class {det.klass!r}"
            )
    return sorted(dets, key=lambda d: -d.confidence)


def filter_detections(dets: Sequence[Detection], threshold: float) -> list[Detection]:
    """Keep detections with confidence >= threshold, preserving order."""
    return [d for d in dets if d.confidence >= threshold]


# ---------------------------------------------------------------------------
# Stub backend
# ---------------------------------------------------------------------------


def _page_key(page: PageImage) -> str:
    return f"{page.doc_id}:{page.page_number}"


def _synth_detections(page: PageImage, seed: str) -> list[Detection]:
    """Deterministic boxes derived from the page identity alone.

    Uses a content hash rather than Python's salted hash() so two runs (and
    two processes) always agree. Classes cycle through the whole taxonomy and
    confidences span [0.30, 0.99] so threshold filtering has something to do.
    """
    digest = hashlib.sha256(f"{seed}:{_page_key(page)}".encode()).digest()
    count = 3 + digest[0] % 3  # 3..5 regions per page
    dets = []
    for i in range(count):
        chunk = hashlib.sha256(digest + bytes([i])).digest()
        klass = LayoutClass(chunk[0] % len(LayoutClass))
        cx = 0.15 + (chunk[1] / 255.0) * 0.7
        cy = 0.15 + (chunk[2] / 255.0) * 0.7
        w = 0.08 + (chunk[3] / 255.0) * 0.25
        h = 0.06 + (chunk[4] / 255.0) * 0.2
        confidence = round(0.30 + (chunk[5] / 255.0) * 0.69, 4)
        dets.append(Detection(klass=klass, box=BoundingBox(cx, cy, w, h), confidence=confidence))
    return dets


class StubDetectorBackend:
    """Deterministic detector stand-in.

    Prediction precedence: boxes memorized by fit(), then pre-seeded boxes,
    then (only with synthesize=True) boxes derived from the page identity;
    otherwise an empty list. Memorized and pre-seeded predictions replay at a
    fixed confidence.
    """

    def __init__(
        self,
        preset: dict[str, list[Detection]] | None = None,
        synthesize: bool = False,
        seed: str = "stub",
        replay_confidence: float = 0.9,
    ):
        self.model_name = "stub"
        self.trainable = True
        self.preset = dict(preset or {})
        self.synthesize = synthesize
        self.seed = seed
        self.replay_confidence = replay_confidence

    def fit(self, data: DetectionDataset, hyperparams: dict, state: Any | None) -> Any:
        memory: dict[str, list[Detection]] = dict(state or {})
        for item in data.items:
            memory[_page_key(item.page)] = [
                Detection(klass=klass, box=box, confidence=self.replay_confidence)
                for klass, box in item.annotation.regions
            ]
        return memory

    def predict(self, state: Any, page: PageImage) -> list[Detection]:
        key = _page_key(page)
        if state and key in state:
            return list(state[key])
        if key in self.preset:
            return list(self.preset[key])
        if self.synthesize:
            return _synth_detections(page, self.seed)
        return []

    def dump_state(self, state: Any) -> dict:
        state = state or {}
        return {
            key: [
                {
                    "class": int(d.klass),
                    "cx": d.box.cx,
                    "cy": d.box.cy,
                    "w": d.box.w,
                    "h": d.box.h,
                    "confidence": d.confidence,
                }
                for d in dets
            ]
            for key, dets in state.items()
        }

    def load_state(self, payload: dict) -> Any:
        return {
            key: [
                Detection(
                    klass=LayoutClass.from_id(row["class"]),
                    box=BoundingBox(row["cx"], row["cy"], row["w"], row["h"]),
                    confidence=row["confidence"],
                )
                for row in rows
            ]
            for key, rows in payload.items()
        }


def create_detector_backend(cfg: dict | None) -> DetectorBackend:
    """Build a detector backend from its config block.

    name="stub" gives the bundled stub; any other name is treated as a dotted
    path "package.module:ClassName" so real detector integrations can be
    plugged in without this package depending on them.
    """
    cfg = dict(cfg or {})
    name = cfg.pop("name", "stub")
    # orchestration keys, not backend constructor arguments
    cfg.pop("state_path", None)
    cfg.pop("hyperparams", None)
    cfg.pop("strategy", None)
    if name == "stub":
        cfg.pop("weights_path", None)
        preset = cfg.pop("preset", None)
        if isinstance(preset, dict):
            stub = StubDetectorBackend(**cfg)
            stub.preset = stub.load_state(preset)
            return stub
        return StubDetectorBackend(**cfg)
    if ":" in name:
        module_name, _, attr = name.partition(":")
        try:
            module = importlib.import_module(module_name)
            factory = getattr(module, attr)
        except (ImportError, AttributeError) as exc:
            raise BackendError(f"cannot load detector backend {name!r}: {exc}") from exc
        return factory(**cfg)
    raise BackendError(
        f"unknown detector backend {name!r}; use 'stub' or a 'module:Class' path"
    )


def load_page_annotations(
    pages: Iterable[PageImage],
    labels_root: Path | str | None = None,
) -> list[LabeledPage]:
    """Pair pages with their label files (same basename, .txt suffix).

    Labels are looked up next to each page image, or under labels_root
    mirroring the image file names. Pages without a label file get an empty
    annotation.
    """
    from .annotations import parse_labels

    out = []
    for page in pages:
        candidates = [Path(page.path).with_suffix(".txt")]
        if labels_root is not None:
            candidates.insert(0, Path(labels_root) / (Path(page.path).stem + ".txt"))
        text = ""
        for candidate in candidates:
            if candidate.is_file():
                text = candidate.read_text(encoding="utf-8")
                break
        out.append(LabeledPage(page=page, annotation=parse_labels(text, page)))
    return out
