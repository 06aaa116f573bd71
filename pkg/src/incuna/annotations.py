"""Five-class layout taxonomy and the normalized label-file format.

Label files carry one region per line, ``class_id cx cy w h``, with all
coordinates given as fractions of the page size (center format). One ``.txt``
per page, same basename as the page image.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from .corpus import PageImage
from .errors import LabelParseError

LABEL_DECIMALS = 6  # serialization precision; round-trip is exact at this scale


class LayoutClass(IntEnum):
    """The five page-region categories; integer ids are stable everywhere."""

    Text = 0
    Title = 1
    Picture = 2
    Table = 3
    Handwriting = 4

    @classmethod
    def from_id(cls, class_id: int) -> "LayoutClass":
        try:
            return cls(class_id)
        except ValueError:
            raise ValueError(f"unknown class id {class_id}") from None

    @classmethod
    def from_name(cls, name: str) -> "LayoutClass":
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown class name {name!r}") from None


@dataclass(frozen=True)
class BoundingBox:
    """Center-format box in page fractions.

    cx, cy lie in [0, 1]; w, h in (0, 1]. The box extent may straddle the
    page edge (e.g. cx - w/2 < 0); rasterization clamps, stored values don't.
    """

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center ({self.cx}, {self.cy}) outside [0, 1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"box size ({self.w}, {self.h}) outside (0, 1]")

    @property
    def x0(self) -> float:
        return self.cx - self.w / 2.0

    @property
    def x1(self) -> float:
        return self.cx + self.w / 2.0

    @property
    def y0(self) -> float:
        return self.cy - self.h / 2.0

    @property
    def y1(self) -> float:
        return self.cy + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def rounded(self, decimals: int = LABEL_DECIMALS) -> "BoundingBox":
        return BoundingBox(
            round(self.cx, decimals),
            round(self.cy, decimals),
            round(self.w, decimals),
            round(self.h, decimals),
        )


@dataclass
class PageAnnotation:
    """Ground-truth regions of one page. The region list may be empty."""

    page: PageImage
    regions: list[tuple[LayoutClass, BoundingBox]] = field(default_factory=list)

    def count_by_class(self) -> dict[LayoutClass, int]:
        counts: dict[LayoutClass, int] = {}
        for klass, _ in self.regions:
            counts[klass] = counts.get(klass, 0) + 1
        return counts


def parse_labels(text: str, page: PageImage) -> PageAnnotation:
    """Parse label-file content into a PageAnnotation.

    Raises LabelParseError (with the offending 1-based line number) on a
    malformed line, an unknown class id, or a coordinate outside [0, 1].
    """
    regions: list[tuple[LayoutClass, BoundingBox]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise LabelParseError(line_no, f"expected 5 fields, got {len(fields)}")
        try:
            class_id = int(fields[0])
        except ValueError:
            raise LabelParseError(line_no, f"class id {fields[0]!r} is not an integer") from None
        try:
            klass = LayoutClass.from_id(class_id)
        except ValueError as exc:
            raise LabelParseError(line_no, str(exc)) from None
        try:
            cx, cy, w, h = (float(f) for f in fields[1:])
        except ValueError:
            raise LabelParseError(line_no, "coordinates must be numeric") from None
        try:
            box = BoundingBox(cx, cy, w, h)
        except ValueError as exc:
            raise LabelParseError(line_no, str(exc)) from None
        regions.append((klass, box))
    return PageAnnotation(page=page, regions=regions)


def write_labels(ann: PageAnnotation) -> str:
    """Serialize an annotation to label-file content.

    Numeric fields are fixed at 6 decimal places so files are byte-stable
    across platforms and parse(write(a)) == a up to that precision.
    """
    lines = [
        f"{int(klass)} {box.cx:.6f} {box.cy:.6f} {box.w:.6f} {box.h:.6f}"
        for klass, box in ann.regions
    ]
    return "".join(line + "\n" for line in lines)
