"""Corpus inventory types: source documents, page images and the manifest."""

from __future__ import annotations

import json
import os.path
import re
from dataclasses import dataclass, field
from pathlib import Path

_SLUG_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def is_valid_doc_id(doc_id: str) -> bool:
    """A doc_id must be a nonempty filesystem-safe slug."""
    return bool(_SLUG_RE.match(doc_id))


@dataclass(frozen=True)
class SourceDocument:
    """A multi-page scan document to be split into page images."""

    doc_id: str
    source_path: Path
    page_count: int = 0

    def __post_init__(self):
        if not is_valid_doc_id(self.doc_id):
            raise ValueError(f"invalid doc_id {self.doc_id!r}: must be a filesystem-safe slug")
        if self.page_count < 0:
            raise ValueError("page_count must be >= 0")


@dataclass(frozen=True)
class PageImage:
    """One rendered page, keyed by (doc_id, page_number); page numbers are 1-based."""

    doc_id: str
    page_number: int
    width_px: int
    height_px: int
    path: Path

    def __post_init__(self):
        if self.page_number < 1:
            raise ValueError("page_number is 1-based")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("page dimensions must be positive")

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.page_number)


def page_image_filename(doc_id: str, page_number: int) -> str:
    """Zero-padded filename so lexicographic order equals page order."""
    return f"{doc_id}_p{page_number:04d}.png"


@dataclass
class DatasetManifest:
    """Inventory of every extracted page image, relative to a corpus root."""

    root: Path
    pages: list[PageImage] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pages)

    def page_keys(self) -> list[tuple[str, int]]:
        return [p.key for p in self.pages]

    def _relative_path(self, path: Path) -> str:
        try:
            return str(Path(path).relative_to(self.root))
        except ValueError:
            # mixed relative/absolute forms of the same location
            return os.path.relpath(path, self.root)

    def to_dict(self) -> dict:
        return {
            "pages": [
                {
                    "doc_id": p.doc_id,
                    "page_number": p.page_number,
                    "width_px": p.width_px,
                    "height_px": p.height_px,
                    "relative_path": self._relative_path(p.path),
                }
                for p in self.pages
            ]
        }

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Path, root: Path | None = None) -> "DatasetManifest":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        root = Path(root) if root is not None else path.parent
        pages = [
            PageImage(
                doc_id=row["doc_id"],
                page_number=row["page_number"],
                width_px=row["width_px"],
                height_px=row["height_px"],
                path=root / row["relative_path"],
            )
            for row in data["pages"]
        ]
        return cls(root=root, pages=pages)
