from __future__ import annotations

import io
from pathlib import Path

import pytest
from PIL import Image
from reportlab.lib.utils import ImageReader
from reportlab.pdfgen import canvas

from incuna.corpus import DatasetManifest, SourceDocument
from incuna.errors import IngestError
from incuna.ingest import build_corpus, extract_pages, probe_page_count
from incuna.pdfscan import PdfError, ScannedPdfReader

POINTS_PER_PX_AT_100DPI = 72 / 100


def scan_pdf(path: Path, page_specs: list[tuple[int, int, tuple[int, int, int]]], jpeg=False):
    """A scanned-book-style PDF: each page is one embedded full-page image.

    page_specs: (width_px, height_px, fill_color); pages sized so the image
    is 100 dpi (1 px = 0.72 pt).
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    c = canvas.Canvas(str(path))
    for width_px, height_px, color in page_specs:
        img = Image.new("RGB", (width_px, height_px), color)
        w_pt = width_px * POINTS_PER_PX_AT_100DPI
        h_pt = height_px * POINTS_PER_PX_AT_100DPI
        c.setPageSize((w_pt, h_pt))
        if jpeg:
            buf = io.BytesIO()
            img.save(buf, format="JPEG", quality=95)
            buf.seek(0)
            c.drawImage(ImageReader(buf), 0, 0, w_pt, h_pt)
        else:
            c.drawImage(ImageReader(img), 0, 0, w_pt, h_pt)
        c.showPage()
    c.save()
    return path


class TestScannedPdfReader:
    def test_page_count_and_sizes(self, tmp_path):
        pdf = scan_pdf(tmp_path / "a.pdf", [(120, 200, (200, 30, 40)), (80, 60, (10, 220, 10))])
        reader = ScannedPdfReader(pdf)
        assert reader.page_count == 2
        assert reader.page_image(1).size == (120, 200)
        assert reader.page_image(2).size == (80, 60)

    def test_render_scales_by_mediabox_dpi(self, tmp_path):
        pdf = scan_pdf(tmp_path / "a.pdf", [(120, 200, (5, 5, 5))])
        reader = ScannedPdfReader(pdf)
        assert reader.render_page(1, dpi=100).size == (120, 200)
        assert reader.render_page(1, dpi=300).size == (360, 600)
        assert reader.render_page(1, dpi=50).size == (60, 100)

    def test_pixel_content_survives(self, tmp_path):
        pdf = scan_pdf(tmp_path / "a.pdf", [(50, 40, (200, 30, 40))])
        image = ScannedPdfReader(pdf).render_page(1, dpi=100)
        assert image.getpixel((25, 20)) == (200, 30, 40)

    def test_jpeg_embedded_pages(self, tmp_path):
        pdf = scan_pdf(tmp_path / "a.pdf", [(64, 48, (120, 120, 120))], jpeg=True)
        image = ScannedPdfReader(pdf).render_page(1, dpi=100)
        assert image.size == (64, 48)
        r, g, b = image.getpixel((32, 24))
        assert abs(r - 120) <= 3 and abs(g - 120) <= 3 and abs(b - 120) <= 3

    def test_not_a_pdf(self, tmp_path):
        junk = tmp_path / "junk.pdf"
        junk.write_bytes(b"this is not a pdf at all")
        with pytest.raises(PdfError):
            ScannedPdfReader(junk)

    def test_truncated_pdf(self, tmp_path):
        pdf = scan_pdf(tmp_path / "a.pdf", [(50, 40, (1, 2, 3))])
        data = pdf.read_bytes()
        pdf.write_bytes(data[: len(data) // 2])
        with pytest.raises(PdfError):
            ScannedPdfReader(pdf).page_image(1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(PdfError):
            ScannedPdfReader(tmp_path / "nope.pdf")

    def test_vector_only_page_rejected(self, tmp_path):
        c = canvas.Canvas(str(tmp_path / "v.pdf"), pagesize=(100, 100))
        c.rect(10, 10, 50, 50, fill=1)
        c.showPage()
        c.save()
        reader = ScannedPdfReader(tmp_path / "v.pdf")
        with pytest.raises(PdfError, match="no embedded raster"):
            reader.page_image(1)


class TestExtractPages:
    def test_max_pages_caps_extraction(self, tmp_path):
        pdf = scan_pdf(tmp_path / "book.pdf", [(40, 50, (i, i, i)) for i in range(7)])
        doc = SourceDocument(doc_id="book", source_path=pdf, page_count=7)
        pages = extract_pages(doc, max_pages=3, dpi=100, out_root=tmp_path / "corpus")
        assert [p.page_number for p in pages] == [1, 2, 3]

    def test_short_document_min_rule(self, tmp_path):
        pdf = scan_pdf(tmp_path / "book.pdf", [(40, 50, (9, 9, 9))] * 2)
        doc = SourceDocument(doc_id="book", source_path=pdf, page_count=2)
        pages = extract_pages(doc, max_pages=100, dpi=100, out_root=tmp_path / "corpus")
        assert len(pages) == 2

    def test_files_named_for_lexicographic_order(self, tmp_path):
        pdf = scan_pdf(tmp_path / "b.pdf", [(30, 30, (0, 0, 0))] * 2)
        doc = SourceDocument(doc_id="b", source_path=pdf)
        pages = extract_pages(doc, max_pages=2, dpi=100, out_root=tmp_path / "c")
        assert pages[0].path.name == "b_p0001.png"
        assert pages[0].path.parent.name == "b"
        assert all(p.path.is_file() for p in pages)

    def test_dimensions_recorded(self, tmp_path):
        pdf = scan_pdf(tmp_path / "b.pdf", [(120, 200, (7, 7, 7))])
        doc = SourceDocument(doc_id="b", source_path=pdf)
        (page,) = extract_pages(doc, max_pages=1, dpi=300, out_root=tmp_path / "c")
        assert (page.width_px, page.height_px) == (360, 600)
        with Image.open(page.path) as img:
            assert img.size == (360, 600)

    def test_rerun_is_idempotent(self, tmp_path):
        pdf = scan_pdf(tmp_path / "b.pdf", [(64, 80, (50, 60, 70))] * 3)
        doc = SourceDocument(doc_id="b", source_path=pdf)
        first = extract_pages(doc, max_pages=3, dpi=144, out_root=tmp_path / "c")
        second = extract_pages(doc, max_pages=3, dpi=144, out_root=tmp_path / "c")
        assert [(p.page_number, p.width_px, p.height_px) for p in first] == [
            (p.page_number, p.width_px, p.height_px) for p in second
        ]

    def test_corrupt_source_names_document(self, tmp_path):
        bad = tmp_path / "bad.pdf"
        bad.write_bytes(b"broken")
        doc = SourceDocument(doc_id="badbook", source_path=bad)
        with pytest.raises(IngestError, match="badbook"):
            extract_pages(doc, max_pages=10, out_root=tmp_path / "c")

    def test_zero_page_document_is_empty_not_error(self, tmp_path):
        class EmptyRenderer:
            page_count = 0

            def render_page(self, page_number, dpi):
                raise AssertionError("must not render")

        doc = SourceDocument(doc_id="empty", source_path=tmp_path / "x.pdf")
        assert (
            extract_pages(doc, max_pages=100, out_root=tmp_path / "c", renderer=EmptyRenderer())
            == []
        )


class TestBuildCorpus:
    def _docs(self, tmp_path, spec: dict[str, int]):
        docs = []
        for doc_id, n in spec.items():
            pdf = scan_pdf(tmp_path / f"{doc_id}.pdf", [(30, 40, (1, 2, 3))] * n)
            docs.append(SourceDocument(doc_id=doc_id, source_path=pdf, page_count=n))
        return docs

    def test_total_is_sum_of_min_rule(self, tmp_path):
        docs = self._docs(tmp_path, {"a": 5, "b": 2, "c": 4})
        manifest = build_corpus(docs, max_pages=3, dpi=100, out_root=tmp_path / "corpus")
        assert len(manifest) == 3 + 2 + 3

    def test_duplicate_doc_id_fails_before_extraction(self, tmp_path):
        docs = self._docs(tmp_path, {"a": 2})
        docs.append(SourceDocument(doc_id="a", source_path=docs[0].source_path, page_count=2))
        with pytest.raises(ValueError, match="duplicate doc_id"):
            build_corpus(docs, max_pages=5, out_root=tmp_path / "corpus")
        assert not (tmp_path / "corpus").exists()

    def test_manifest_count_matches_files_on_disk(self, tmp_path):
        docs = self._docs(tmp_path, {"a": 3, "b": 2})
        root = tmp_path / "corpus"
        manifest = build_corpus(docs, max_pages=10, dpi=100, out_root=root)
        on_disk = list(root.glob("*/*.png"))
        assert len(manifest) == len(on_disk) == 5

    def test_manifest_roundtrip(self, tmp_path):
        docs = self._docs(tmp_path, {"a": 2})
        root = tmp_path / "corpus"
        manifest = build_corpus(docs, max_pages=10, dpi=100, out_root=root)
        manifest.save(root / "manifest.json")
        loaded = DatasetManifest.load(root / "manifest.json", root=root)
        assert loaded.page_keys() == manifest.page_keys()
        assert all(p.path.is_file() for p in loaded.pages)

    def test_manifest_roundtrip_with_relative_root(self, tmp_path, monkeypatch):
        # a root like "corpus" (no leading dir) must not duplicate itself in
        # the stored relative paths
        docs = self._docs(tmp_path, {"a": 2})
        monkeypatch.chdir(tmp_path)
        manifest = build_corpus(docs, max_pages=10, dpi=100, out_root="corpus")
        manifest.save(Path("corpus/manifest.json"))
        loaded = DatasetManifest.load(Path("corpus/manifest.json"), root=Path("corpus"))
        assert all(p.path.is_file() for p in loaded.pages)
        assert all("corpus/corpus" not in str(p.path) for p in loaded.pages)

    def test_parallel_matches_serial(self, tmp_path):
        docs = self._docs(tmp_path, {"a": 2, "b": 3, "c": 1})
        serial = build_corpus(docs, max_pages=10, dpi=100, out_root=tmp_path / "s")
        parallel = build_corpus(docs, max_pages=10, dpi=100, out_root=tmp_path / "p", workers=3)
        assert serial.page_keys() == parallel.page_keys()

    def test_probe_page_count(self, tmp_path):
        (doc,) = self._docs(tmp_path, {"a": 4})
        assert probe_page_count(doc.source_path) == 4
