"""Turn source scan documents into a canonical on-disk corpus of page images."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Protocol

from PIL import Image

from .corpus import DatasetManifest, PageImage, SourceDocument, page_image_filename
from .errors import IncunaError, IngestError
from .pdfscan import ScannedPdfReader

logger = logging.getLogger(__name__)

DEFAULT_DPI = 300  # common archival OCR floor


class PageRenderer(Protocol):
    """Contract a document-rendering backend must satisfy."""

    @property
    def page_count(self) -> int: ...

    def render_page(self, page_number: int, dpi: int) -> Image.Image: ...


def open_document(path: Path | str) -> PageRenderer:
    """Open a source document with the built-in scanned-PDF reader."""
    return ScannedPdfReader(path)


def probe_page_count(path: Path | str) -> int:
    """Number of pages in a source document, without rendering anything."""
    return open_document(path).page_count


def extract_pages(
    doc: SourceDocument,
    max_pages: int,
    dpi: int = DEFAULT_DPI,
    out_root: Path | str = "corpus",
    renderer: PageRenderer | None = None,
) -> list[PageImage]:
    """Render the first min(page_count, max_pages) pages of a document to PNG.

    Files land under ``<out_root>/<doc_id>/`` with 1-based, zero-padded page
    numbers. A zero-page document yields an empty list; an unreadable or
    corrupt source raises IngestError naming the document.
    """
    if max_pages < 1:
        raise ValueError("max_pages must be >= 1")
    if dpi < 1:
        raise ValueError("dpi must be >= 1")
    try:
        reader = renderer if renderer is not None else open_document(doc.source_path)
        total = reader.page_count
    except IncunaError as exc:
        raise IngestError(doc.doc_id, str(exc)) from exc
    except OSError as exc:
        raise IngestError(doc.doc_id, f"cannot open {doc.source_path}: {exc}") from exc

    n = min(total, max_pages)
    doc_dir = Path(out_root) / doc.doc_id
    if n > 0:
        doc_dir.mkdir(parents=True, exist_ok=True)

    pages: list[PageImage] = []
    for page_number in range(1, n + 1):
        try:
            image = reader.render_page(page_number, dpi=dpi)
        except IncunaError as exc:
            raise IngestError(doc.doc_id, f"page {page_number}: {exc}") from exc
        out_path = doc_dir / page_image_filename(doc.doc_id, page_number)
        image.save(out_path, format="PNG")
        pages.append(
            PageImage(
                doc_id=doc.doc_id,
                page_number=page_number,
                width_px=image.width,
                height_px=image.height,
                path=out_path,
            )
        )
    logger.info("extracted %d/%d pages of %s at %d dpi", n, total, doc.doc_id, dpi)
    return pages


def build_corpus(
    docs: list[SourceDocument],
    max_pages: int,
    dpi: int = DEFAULT_DPI,
    out_root: Path | str = "corpus",
    workers: int = 1,
) -> DatasetManifest:
    """Extract every document and assemble the corpus manifest.

    doc_ids must be pairwise distinct; this is checked before any extraction
    starts. Documents are independent, so extraction may run on a small
    thread pool; the manifest itself is assembled in input order.
    """
    seen: set[str] = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)

    out_root = Path(out_root)
    if workers > 1 and len(docs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_doc = list(
                pool.map(lambda d: extract_pages(d, max_pages, dpi, out_root), docs)
            )
    else:
        per_doc = [extract_pages(d, max_pages, dpi, out_root) for d in docs]

    manifest = DatasetManifest(root=out_root)
    for pages in per_doc:
        manifest.pages.extend(pages)
    return manifest
