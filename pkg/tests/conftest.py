from __future__ import annotations

import random
from pathlib import Path

import pytest
from PIL import Image

from incuna.annotations import BoundingBox, LayoutClass, PageAnnotation
from incuna.corpus import DatasetManifest, PageImage
from incuna.detection import Detection


def make_page_png(
    path: Path, size: tuple[int, int] = (200, 160), color=(240, 230, 210)
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new("RGB", size, color).save(path, format="PNG")


def make_page(
    tmp_path: Path,
    doc_id: str = "doc",
    page_number: int = 1,
    size: tuple[int, int] = (200, 160),
    color=(240, 230, 210),
) -> PageImage:
    path = tmp_path / doc_id / f"{doc_id}_p{page_number:04d}.png"
    make_page_png(path, size=size, color=color)
    return PageImage(
        doc_id=doc_id,
        page_number=page_number,
        width_px=size[0],
        height_px=size[1],
        path=path,
    )


def make_manifest(tmp_path: Path, n_pages: int, doc_id: str = "doc") -> DatasetManifest:
    manifest = DatasetManifest(root=tmp_path)
    for i in range(1, n_pages + 1):
        manifest.pages.append(make_page(tmp_path, doc_id=doc_id, page_number=i))
    return manifest


def manifest_without_files(n_pages: int, doc_id: str = "doc") -> DatasetManifest:
    """Manifest whose page files don't exist; fine for split/eval tests."""
    manifest = DatasetManifest(root=Path("/nonexistent"))
    for i in range(1, n_pages + 1):
        manifest.pages.append(
            PageImage(
                doc_id=doc_id,
                page_number=i,
                width_px=100,
                height_px=100,
                path=Path(f"/nonexistent/{doc_id}_p{i:04d}.png"),
            )
        )
    return manifest


def random_box(rng: random.Random, quantize: int | None = None) -> BoundingBox:
    """Valid random box; quantizing to a coarse grid provokes IoU ties."""

    def pick(lo: float, hi: float) -> float:
        v = rng.uniform(lo, hi)
        if quantize:
            v = max(lo, min(hi, round(v * quantize) / quantize))
        return v

    return BoundingBox(cx=pick(0.0, 1.0), cy=pick(0.0, 1.0), w=pick(0.05, 1.0), h=pick(0.05, 1.0))


def random_instance(
    rng: random.Random,
    page: PageImage,
    max_boxes: int = 20,
    quantize: int | None = 8,
) -> tuple[list[Detection], PageAnnotation]:
    """One page's random detections and ground truth, with deliberate
    confidence collisions (2-decimal quantization) and box collisions."""
    n_dets = rng.randint(0, max_boxes)
    n_gts = rng.randint(0, max_boxes)
    dets = [
        Detection(
            klass=LayoutClass(rng.randrange(5)),
            box=random_box(rng, quantize),
            confidence=round(rng.random(), 2),
        )
        for _ in range(n_dets)
    ]
    gts = PageAnnotation(
        page=page,
        regions=[
            (LayoutClass(rng.randrange(5)), random_box(rng, quantize)) for _ in range(n_gts)
        ],
    )
    return dets, gts


@pytest.fixture
def page(tmp_path) -> PageImage:
    return make_page(tmp_path)
