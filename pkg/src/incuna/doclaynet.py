"""Remap an external COCO-style layout dataset onto the five-class taxonomy.

The external set carries 11 categories; a RemapRule folds them onto
{Text, Title, Picture, Table} or drops them. Boxes arrive as top-left
pixel (x, y, w, h) and leave in normalized center format.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .annotations import BoundingBox, LayoutClass, PageAnnotation, write_labels
from .corpus import PageImage, is_valid_doc_id
from .errors import RemapError

logger = logging.getLogger(__name__)

EXTERNAL_CATEGORIES = (
    "Caption",
    "Footnote",
    "Formula",
    "List-item",
    "Page-footer",
    "Page-header",
    "Picture",
    "Section-header",
    "Table",
    "Text",
    "Title",
)


class _Drop:
    """Sentinel: the category's boxes are removed instead of remapped."""

    def __repr__(self) -> str:
        return "DROP"


DROP = _Drop()


@dataclass(frozen=True)
class RemapRule:
    """Total mapping from external category names to a layout class or DROP."""

    mapping: dict[str, LayoutClass | _Drop]

    def __post_init__(self):
        allowed = {LayoutClass.Text, LayoutClass.Title, LayoutClass.Picture, LayoutClass.Table}
        for name, target in self.mapping.items():
            if target is not DROP and target not in allowed:
                raise ValueError(f"category {name!r} maps to disallowed target {target!r}")

    def target(self, category: str) -> LayoutClass | _Drop:
        if category not in self.mapping:
            raise RemapError(f"category {category!r} has no remap rule")
        return self.mapping[category]


def default_remap() -> RemapRule:
    """The standard folding of the 11 external categories.

    Caption, Footnote, List-item, Section-header and Text merge into Text;
    Picture, Title and Table are retained; Formula, Page-footer and
    Page-header are dropped.
    """
    return RemapRule(
        {
            "Caption": LayoutClass.Text,
            "Footnote": LayoutClass.Text,
            "Formula": DROP,
            "List-item": LayoutClass.Text,
            "Page-footer": DROP,
            "Page-header": DROP,
            "Picture": LayoutClass.Picture,
            "Section-header": LayoutClass.Text,
            "Table": LayoutClass.Table,
            "Text": LayoutClass.Text,
            "Title": LayoutClass.Title,
        }
    )


@dataclass
class RemapReport:
    """Box bookkeeping for one remap run; conservation must hold."""

    input_count: int = 0
    output_count: int = 0
    dropped_by_category: dict[str, int] = field(default_factory=dict)
    dropped_degenerate: int = 0

    @property
    def dropped_total(self) -> int:
        return sum(self.dropped_by_category.values()) + self.dropped_degenerate

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "output_count": self.output_count,
            "dropped_by_category": dict(sorted(self.dropped_by_category.items())),
            "dropped_degenerate": self.dropped_degenerate,
        }

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def _doc_id_for(file_name: str, image_id: int) -> str:
    stem = Path(file_name).stem if file_name else ""
    return stem if is_valid_doc_id(stem) else f"img{image_id}"


def remap_dataset(
    coco: dict | str | Path,
    rule: RemapRule | None = None,
) -> tuple[list[PageAnnotation], RemapReport]:
    """Convert a COCO-style annotation document to per-page annotations.

    Pixel boxes are clamped to their image bounds before normalization; a box
    that is empty after clamping (zero width or height) is dropped and counted
    as degenerate rather than erroring, since large crowd-sourced sets contain
    such boxes. Box conservation: input = output + category drops + degenerate.
    """
    if rule is None:
        rule = default_remap()
    if not isinstance(coco, dict):
        coco = json.loads(Path(coco).read_text(encoding="utf-8"))

    categories = {c["id"]: c["name"] for c in coco.get("categories", [])}
    for name in categories.values():
        rule.target(name)  # total-rule check up front, names the category

    pages: dict[int, PageAnnotation] = {}
    order: list[int] = []
    for img in coco.get("images", []):
        image_id = img["id"]
        width, height = img["width"], img["height"]
        page = PageImage(
            doc_id=_doc_id_for(img.get("file_name", ""), image_id),
            page_number=1,
            width_px=width,
            height_px=height,
            path=Path(img.get("file_name", f"img{image_id}.png")),
        )
        pages[image_id] = PageAnnotation(page=page, regions=[])
        order.append(image_id)

    report = RemapReport()
    for ann in coco.get("annotations", []):
        report.input_count += 1
        image_id = ann["image_id"]
        if image_id not in pages:
            raise RemapError(f"annotation {ann.get('id')} references unknown image id {image_id}")
        cat_id = ann["category_id"]
        if cat_id not in categories:
            raise RemapError(f"annotation {ann.get('id')} references unknown category id {cat_id}")
        category = categories[cat_id]
        target = rule.target(category)
        if target is DROP:
            report.dropped_by_category[category] = report.dropped_by_category.get(category, 0) + 1
            continue

        page = pages[image_id].page
        x, y, w, h = ann["bbox"]
        x0 = max(0.0, min(float(x), page.width_px))
        y0 = max(0.0, min(float(y), page.height_px))
        x1 = max(0.0, min(float(x) + float(w), page.width_px))
        y1 = max(0.0, min(float(y) + float(h), page.height_px))
        if x1 <= x0 or y1 <= y0:
            report.dropped_degenerate += 1
            logger.warning(
                "degenerate box %r on image %s dropped", ann.get("bbox"), image_id
            )
            continue
        box = BoundingBox(
            cx=(x0 + x1) / 2.0 / page.width_px,
            cy=(y0 + y1) / 2.0 / page.height_px,
            w=(x1 - x0) / page.width_px,
            h=(y1 - y0) / page.height_px,
        )
        pages[image_id].regions.append((target, box))
        report.output_count += 1

    return [pages[i] for i in order], report


def export_labels(annotations: list[PageAnnotation], out_dir: Path | str) -> list[Path]:
    """Write one label file per page, named after the page image's basename."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for ann in annotations:
        path = out_dir / (Path(ann.page.path).stem + ".txt")
        path.write_text(write_labels(ann), encoding="utf-8")
        written.append(path)
    return written
