"""Second-stage analysis of Picture crops: subclassification into five
categories and zero-shot semantic description of illustrations.

Both models sit behind adapter contracts. The bundled prototype classifier
(nearest mean color signature) trains and predicts deterministically with no
ML runtime; a torchvision-based residual-network backend is available as an
optional extra. The description scorer ships as a deterministic stub; a real
image-text model plugs in through the same contract.
"""

from __future__ import annotations

import hashlib
import importlib
import math
import random
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Any, Protocol, Sequence

from PIL import Image

from .annotations import LayoutClass
from .crops import Crop
from .errors import ContractError, DataError

PROB_TOLERANCE = 1e-6


class PictureSubclass(IntEnum):
    """The five second-stage categories for Picture regions."""

    Decorative_letter = 0
    Illustration = 1
    Other = 2
    Stamp = 3
    Wrong_detection = 4

    @classmethod
    def from_name(cls, name: str) -> "PictureSubclass":
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown picture subclass {name!r}") from None


@dataclass(frozen=True)
class SubclassPrediction:
    crop_ref: str
    subclass: PictureSubclass
    probabilities: dict[PictureSubclass, float]

    def __post_init__(self):
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > PROB_TOLERANCE:
            raise ValueError(f"probabilities sum to {total}, not 1")
        top = min(self.probabilities, key=lambda k: (-self.probabilities[k], int(k)))
        if top is not self.subclass:
            raise ValueError(f"subclass {self.subclass.name} is not the argmax ({top.name})")


@dataclass(frozen=True)
class DescriptionPrompt:
    text: str
    index: int


DEFAULT_PROMPTS: tuple[DescriptionPrompt, ...] = tuple(
    DescriptionPrompt(text=text, index=i)
    for i, text in enumerate(
        [
            "religious scene",
            "astrology or alchemy",
            "medieval engraving",
            "Renaissance-style illustration",
            "magic and divination",
            "printer's ornament",
            "decorative book illustration",
            "mathematics",
        ]
    )
)


@dataclass(frozen=True)
class SemanticMatch:
    crop_ref: str
    ranked: tuple[tuple[DescriptionPrompt, float], ...]  # score descending

    @property
    def top(self) -> DescriptionPrompt:
        return self.ranked[0][0]


def softmax(values: Sequence[float]) -> list[float]:
    peak = max(values)
    exps = [math.exp(v - peak) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


# ---------------------------------------------------------------------------
# Classifier backends
# ---------------------------------------------------------------------------


class ClassifierBackend(Protocol):
    name: str
    trainable: bool

    def fit(
        self, samples: Sequence[tuple[Path, PictureSubclass]], hyperparams: dict, seed: int
    ) -> Any: ...

    def predict_probs(self, state: Any, image_path: Path) -> dict[PictureSubclass, float]: ...


class StubClassifierBackend:
    """Untrainable stub: fixed logits, or logits hashed from the crop bytes."""

    def __init__(self, logits: dict[PictureSubclass, float] | None = None):
        self.name = "stub"
        self.trainable = False
        self.logits = dict(logits) if logits else None

    def predict_probs(self, state: Any, image_path: Path) -> dict[PictureSubclass, float]:
        if self.logits is not None:
            ordered = [self.logits.get(sub, 0.0) for sub in PictureSubclass]
        else:
            digest = hashlib.sha256(Path(image_path).read_bytes()).digest()
            ordered = [digest[i] / 64.0 for i in range(len(PictureSubclass))]
        probs = softmax(ordered)
        return dict(zip(PictureSubclass, probs))

    def fit(self, samples, hyperparams, seed):
        raise NotImplementedError("the stub classifier cannot be trained")


class PrototypeClassifierBackend:
    """Nearest mean-signature classifier; the signature is a downsampled RGB
    grid, so programmatically distinct textures separate cleanly. Entirely
    deterministic and dependency-free."""

    def __init__(self, grid: int = 4, temperature: float = 1000.0):
        self.name = "prototype"
        self.trainable = True
        self.grid = grid
        self.temperature = temperature

    def _signature(self, image_path: Path) -> list[float]:
        with Image.open(image_path) as img:
            small = img.convert("RGB").resize((self.grid, self.grid), Image.BILINEAR)
        return [b / 255.0 for b in small.tobytes()]

    def fit(
        self, samples: Sequence[tuple[Path, PictureSubclass]], hyperparams: dict, seed: int
    ) -> Any:
        sums: dict[PictureSubclass, list[float]] = {}
        counts: dict[PictureSubclass, int] = {}
        for path, sub in samples:
            sig = self._signature(path)
            if sub not in sums:
                sums[sub] = [0.0] * len(sig)
            sums[sub] = [a + b for a, b in zip(sums[sub], sig)]
            counts[sub] = counts.get(sub, 0) + 1
        return {
            sub: [v / counts[sub] for v in total] for sub, total in sums.items()
        }

    def predict_probs(self, state: Any, image_path: Path) -> dict[PictureSubclass, float]:
        if not state:
            raise DataError("prototype classifier used before training")
        sig = self._signature(image_path)
        logits = []
        for sub in PictureSubclass:
            proto = state.get(sub)
            if proto is None:
                logits.append(-self.temperature)  # untrained class: effectively impossible
            else:
                dist2 = sum((a - b) ** 2 for a, b in zip(sig, proto))
                logits.append(-self.temperature * dist2 / len(sig))
        probs = softmax(logits)
        return dict(zip(PictureSubclass, probs))


class TorchClassifierBackend:
    """Residual-network classifier via torchvision; optional extra.

    Trains a small resnet18 from scratch. Intended for real picture crops;
    hyperparams: image_size (default 64), epochs (8), lr (1e-3), batch_size
    (16).
    """

    def __init__(self, arch: str = "resnet18"):
        try:
            import torch  # noqa: F401
            import torchvision  # noqa: F401
        except ImportError as exc:
            raise DataError(
                "the torch classifier backend needs the [torch] extra installed"
            ) from exc
        self.name = arch
        self.trainable = True
        self.arch = arch

    def _load_tensor(self, path: Path, size: int):
        import torch

        with Image.open(path) as img:
            img = img.convert("RGB").resize((size, size), Image.BILINEAR)
        data = torch.frombuffer(bytearray(img.tobytes()), dtype=torch.uint8)
        return data.reshape(size, size, 3).permute(2, 0, 1).float() / 255.0

    def fit(
        self, samples: Sequence[tuple[Path, PictureSubclass]], hyperparams: dict, seed: int
    ) -> Any:
        import torch
        from torchvision import models

        size = int(hyperparams.get("image_size", 64))
        epochs = int(hyperparams.get("epochs", 8))
        lr = float(hyperparams.get("lr", 1e-3))
        batch_size = int(hyperparams.get("batch_size", 16))

        torch.manual_seed(seed)
        model = getattr(models, self.arch)(weights=None, num_classes=len(PictureSubclass))
        xs = torch.stack([self._load_tensor(p, size) for p, _ in samples])
        ys = torch.tensor([int(sub) for _, sub in samples])
        optimizer = torch.optim.Adam(model.parameters(), lr=lr)
        loss_fn = torch.nn.CrossEntropyLoss()
        generator = torch.Generator().manual_seed(seed)
        model.train()
        for _ in range(epochs):
            order = torch.randperm(len(xs), generator=generator)
            for start in range(0, len(xs), batch_size):
                idx = order[start : start + batch_size]
                optimizer.zero_grad()
                loss = loss_fn(model(xs[idx]), ys[idx])
                loss.backward()
                optimizer.step()
        model.eval()
        return {"model": model, "image_size": size}

    def predict_probs(self, state: Any, image_path: Path) -> dict[PictureSubclass, float]:
        import torch

        model = state["model"]
        x = self._load_tensor(Path(image_path), state["image_size"]).unsqueeze(0)
        with torch.no_grad():
            probs = torch.softmax(model(x)[0], dim=0).tolist()
        return dict(zip(PictureSubclass, probs))


@dataclass
class TrainedClassifier:
    backend: ClassifierBackend
    state: Any


def train_subclassifier(
    backend: ClassifierBackend,
    labeled_crops: dict[PictureSubclass, list[Path]],
    hyperparams: dict | None = None,
    seed: int = 0,
) -> tuple[TrainedClassifier, float | None]:
    """Train on labeled crops and report accuracy on a seeded 80/20 holdout.

    Needs at least two subclasses with at least one example each. The holdout
    is stratified per class (classes with a single example stay in training);
    accuracy is None only if every class is a singleton.
    """
    present = {sub: paths for sub, paths in labeled_crops.items() if paths}
    if len(present) < 2:
        raise DataError(f"need >= 2 subclasses with examples, got {len(present)}")
    for sub, paths in present.items():
        for path in paths:
            if not Path(path).is_file():
                raise DataError(f"{sub.name} example {path} is unreadable")
    if not getattr(backend, "trainable", False):
        raise DataError(f"classifier backend {backend.name!r} is not trainable")

    rng = random.Random(seed)
    train_samples: list[tuple[Path, PictureSubclass]] = []
    holdout_samples: list[tuple[Path, PictureSubclass]] = []
    for sub in sorted(present, key=int):
        paths = sorted(Path(p) for p in present[sub])
        rng.shuffle(paths)
        n = len(paths)
        n_holdout = min(n - 1, max(1, math.floor(0.2 * n))) if n >= 2 else 0
        holdout_samples.extend((p, sub) for p in paths[:n_holdout])
        train_samples.extend((p, sub) for p in paths[n_holdout:])

    state = backend.fit(train_samples, dict(hyperparams or {}), seed)
    trained = TrainedClassifier(backend=backend, state=state)

    if not holdout_samples:
        return trained, None
    correct = 0
    for path, sub in holdout_samples:
        probs = backend.predict_probs(state, path)
        predicted = min(probs, key=lambda k: (-probs[k], int(k)))
        correct += predicted is sub
    return trained, correct / len(holdout_samples)


def classify_crop(trained: TrainedClassifier, crop: Crop) -> SubclassPrediction:
    """Predict the subclass of one Picture crop (deterministic per state)."""
    if crop.klass is not LayoutClass.Picture:
        raise ContractError(
            f"subclassification accepts Picture crops only, got {crop.klass.name} ({crop.ref})"
        )
    probs = trained.backend.predict_probs(trained.state, Path(crop.path))
    subclass = min(probs, key=lambda k: (-probs[k], int(k)))
    return SubclassPrediction(crop_ref=crop.ref, subclass=subclass, probabilities=probs)


# ---------------------------------------------------------------------------
# Zero-shot description
# ---------------------------------------------------------------------------


class ScorerBackend(Protocol):
    name: str

    def score(self, image_path: Path, prompts: Sequence[str]) -> list[float]: ...


class StubScorerBackend:
    """Deterministic image-text scorer: a custom score function, or scores
    hashed from (crop bytes, prompt text)."""

    def __init__(self, score_fn=None):
        self.name = "stub"
        self.score_fn = score_fn

    def score(self, image_path: Path, prompts: Sequence[str]) -> list[float]:
        if self.score_fn is not None:
            return [self.score_fn(image_path, text, i) for i, text in enumerate(prompts)]
        image_digest = hashlib.sha256(Path(image_path).read_bytes()).digest()
        scores = []
        for text in prompts:
            digest = hashlib.sha256(image_digest + text.encode("utf-8")).digest()
            scores.append(int.from_bytes(digest[:4], "big") / 2**32)
        return scores


def describe_illustration(
    scorer: ScorerBackend,
    crop: Crop,
    prompts: Sequence[DescriptionPrompt] = DEFAULT_PROMPTS,
) -> SemanticMatch:
    """Rank the candidate descriptions against one illustration crop.

    Scores are the backend's raw image-text similarities, sorted descending
    with ties broken by prompt index; the ranked list is a permutation of the
    input prompts.
    """
    if not prompts:
        raise ValueError("prompt list must not be empty")
    if crop.klass is not LayoutClass.Picture:
        raise ContractError(
            f"description accepts Picture crops only, got {crop.klass.name} ({crop.ref})"
        )
    scores = scorer.score(Path(crop.path), [p.text for p in prompts])
    if len(scores) != len(prompts):
        raise ValueError(
            f"scorer returned {len(scores)} scores for {len(prompts)} prompts"
        )
    ranked = sorted(zip(prompts, scores), key=lambda pair: (-pair[1], pair[0].index))
    return SemanticMatch(crop_ref=crop.ref, ranked=tuple(ranked))


def load_labeled_crops(root: Path | str) -> dict[PictureSubclass, list[Path]]:
    """Read the on-disk training layout: picture_labels/<Subclass>/*.png."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"labeled-crop directory {root} does not exist")
    out: dict[PictureSubclass, list[Path]] = {}
    for sub_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        sub = PictureSubclass.from_name(sub_dir.name)
        out[sub] = sorted(p for p in sub_dir.iterdir() if p.suffix.lower() == ".png")
    return out


def prompts_from_texts(texts: Sequence[str]) -> tuple[DescriptionPrompt, ...]:
    return tuple(DescriptionPrompt(text=t, index=i) for i, t in enumerate(texts))


def create_classifier_backend(cfg: dict | None) -> ClassifierBackend:
    """Builtin names: 'stub', 'prototype', 'resnet18' (torch extra); anything
    else is a 'module:Class' dotted path."""
    cfg = dict(cfg or {})
    name = cfg.pop("name", "stub")
    if name == "stub":
        logits = cfg.pop("logits", None)
        if logits:
            logits = {PictureSubclass.from_name(k): float(v) for k, v in logits.items()}
        return StubClassifierBackend(logits=logits)
    if name == "prototype":
        return PrototypeClassifierBackend(**cfg)
    if name in ("resnet18", "resnet34", "resnet50"):
        return TorchClassifierBackend(arch=name)
    if ":" in name:
        module_name, _, attr = name.partition(":")
        module = importlib.import_module(module_name)
        return getattr(module, attr)(**cfg)
    raise ValueError(f"unknown classifier backend {name!r}")


def create_scorer_backend(cfg: dict | None) -> ScorerBackend:
    cfg = dict(cfg or {})
    name = cfg.pop("name", "stub")
    if name == "stub":
        return StubScorerBackend()
    if ":" in name:
        module_name, _, attr = name.partition(":")
        module = importlib.import_module(module_name)
        return getattr(module, attr)(**cfg)
    raise ValueError(f"unknown scorer backend {name!r}")
