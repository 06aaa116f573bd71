"""Cut class-filtered pixel regions out of page rasters."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .annotations import BoundingBox, LayoutClass
from .corpus import PageImage
from .detection import Detection
from .errors import IngestError

logger = logging.getLogger(__name__)


def round_half_away(x: float) -> int:
    """round-half-away-from-zero, so pixel rects are platform-stable
    (Python's round() would go to the nearest even integer)."""
    return math.floor(x + 0.5) if x >= 0 else math.ceil(x - 0.5)


def box_to_pixel_rect(
    box: BoundingBox, width_px: int, height_px: int, pad_px: int = 0
) -> tuple[int, int, int, int]:
    """Half-open pixel rect of a normalized box, padded then clamped to the page."""
    x0 = round_half_away(box.x0 * width_px) - pad_px
    y0 = round_half_away(box.y0 * height_px) - pad_px
    x1 = round_half_away(box.x1 * width_px) + pad_px
    y1 = round_half_away(box.y1 * height_px) + pad_px
    return (
        min(max(x0, 0), width_px),
        min(max(y0, 0), height_px),
        min(max(x1, 0), width_px),
        min(max(y1, 0), height_px),
    )


def rect_to_box(
    rect: tuple[int, int, int, int], width_px: int, height_px: int
) -> BoundingBox:
    """Re-normalize a pixel rect; inverse of box_to_pixel_rect up to rounding."""
    x0, y0, x1, y1 = rect
    return BoundingBox(
        cx=(x0 + x1) / 2.0 / width_px,
        cy=(y0 + y1) / 2.0 / height_px,
        w=(x1 - x0) / width_px,
        h=(y1 - y0) / height_px,
    )


@dataclass(frozen=True)
class Crop:
    """One saved region cut from a page; pixel_rect is half-open."""

    doc_id: str
    page_number: int
    klass: LayoutClass
    pixel_rect: tuple[int, int, int, int]
    confidence: float
    path: Path
    detection_index: int = -1

    def __post_init__(self):
        x0, y0, x1, y1 = self.pixel_rect
        if not (0 <= x0 < x1 and 0 <= y0 < y1):
            raise ValueError(f"degenerate pixel rect {self.pixel_rect}")

    @property
    def ref(self) -> str:
        return f"{self.doc_id}_p{self.page_number:04d}_{self.detection_index}"


def extract_crops(
    page: PageImage,
    dets: list[Detection],
    classes: set[LayoutClass],
    pad_px: int = 0,
    out_root: Path | str = "crops",
) -> list[Crop]:
    """Save the crop of every detection whose class is in `classes`.

    Files go to ``<out_root>/<ClassName>/<doc>_p<page>_<idx>.png`` where idx
    is the detection's index in `dets`, which keeps crops traceable back to
    their detections. Rects that clamp to zero area are skipped with a
    warning instead of erroring.
    """
    if pad_px < 0:
        raise ValueError("pad_px must be >= 0")
    try:
        image = Image.open(page.path)
        image.load()
    except (OSError, ValueError) as exc:
        raise IngestError(page.doc_id, f"cannot read page raster {page.path}: {exc}") from exc

    out_root = Path(out_root)
    crops: list[Crop] = []
    for idx, det in enumerate(dets):
        if det.klass not in classes:
            continue
        rect = box_to_pixel_rect(det.box, page.width_px, page.height_px, pad_px)
        x0, y0, x1, y1 = rect
        if x0 >= x1 or y0 >= y1:
            logger.warning(
                "%s p%d detection %d (%s) clamps to empty rect %s, skipped",
                page.doc_id,
                page.page_number,
                idx,
                det.klass.name,
                rect,
            )
            continue
        class_dir = out_root / det.klass.name
        class_dir.mkdir(parents=True, exist_ok=True)
        out_path = class_dir / f"{page.doc_id}_p{page.page_number:04d}_{idx}.png"
        image.crop(rect).save(out_path, format="PNG")
        crops.append(
            Crop(
                doc_id=page.doc_id,
                page_number=page.page_number,
                klass=det.klass,
                pixel_rect=rect,
                confidence=det.confidence,
                path=out_path,
                detection_index=idx,
            )
        )
    return crops
