"""Deterministic train/val/test partition of a corpus manifest."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import DatasetManifest

SUBSETS = ("train", "val", "test")

# absorbs float representation error in n * ratio (e.g. 10 * 0.7 = 6.999...)
_RATIO_EPS = 1e-9


@dataclass
class SplitAssignment:
    """Maps every manifest page to exactly one of train/val/test."""

    seed: int
    ratios: tuple[float, float, float]
    assignments: dict[tuple[str, int], str] = field(default_factory=dict)

    def subset(self, name: str) -> list[tuple[str, int]]:
        if name not in SUBSETS:
            raise ValueError(f"unknown subset {name!r}")
        return [key for key, sub in self.assignments.items() if sub == name]

    def counts(self) -> dict[str, int]:
        out = {s: 0 for s in SUBSETS}
        for sub in self.assignments.values():
            out[sub] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "assignments": [
                {"doc_id": doc_id, "page_number": page_number, "subset": sub}
                for (doc_id, page_number), sub in self.assignments.items()
            ],
        }

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "SplitAssignment":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        ratios = tuple(data["ratios"])
        assignments = {
            (row["doc_id"], row["page_number"]): row["subset"] for row in data["assignments"]
        }
        return cls(seed=data["seed"], ratios=ratios, assignments=assignments)


def _partition_counts(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """floor / floor / remainder, so the test subset absorbs rounding slack."""
    n_train = math.floor(n * ratios[0] + _RATIO_EPS)
    n_val = math.floor(n * ratios[1] + _RATIO_EPS)
    return n_train, n_val, n - n_train - n_val


def split_dataset(
    manifest: DatasetManifest,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    stratify_by_document: bool = False,
) -> SplitAssignment:
    """Shuffle pages with a seeded PRNG and partition them by the ratios.

    Deterministic for a fixed (manifest order, seed). With
    stratify_by_document the ratios are applied within each document's pages
    separately, which prevents any document from landing entirely in one
    subset; the default is a plain page-level split.
    """
    if len(manifest) == 0:
        raise ValueError("cannot split an empty manifest")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios} (sum {sum(ratios)})")

    rng = random.Random(seed)
    assignment = SplitAssignment(seed=seed, ratios=tuple(ratios))

    if stratify_by_document:
        groups: dict[str, list[tuple[str, int]]] = {}
        for key in manifest.page_keys():
            groups.setdefault(key[0], []).append(key)
        group_items = [groups[doc_id] for doc_id in sorted(groups)]
    else:
        group_items = [manifest.page_keys()]

    for keys in group_items:
        keys = list(keys)
        rng.shuffle(keys)
        n_train, n_val, _ = _partition_counts(len(keys), tuple(ratios))
        for i, key in enumerate(keys):
            if i < n_train:
                sub = "train"
            elif i < n_train + n_val:
                sub = "val"
            else:
                sub = "test"
            assignment.assignments[key] = sub

    # restore manifest order for a stable on-disk representation
    assignment.assignments = {
        key: assignment.assignments[key] for key in manifest.page_keys()
    }
    return assignment
