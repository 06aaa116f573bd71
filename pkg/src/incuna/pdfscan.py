"""Minimal reader for scanned PDFs: one full-page raster image per page.

Digitized book scans are PDFs where each page's content is a single embedded
image. This module parses exactly that shape (classic cross-reference
tables, page tree, per-page image XObjects with ASCII85/Flate/DCT filters)
and rescales the embedded scan to a requested dpi using the page's MediaBox.

It is not a general PDF renderer: vector content is ignored, cross-reference
streams (PDF 1.5 packed objects) and predictor-coded images are rejected
with a PdfError. Anything richer should go through a real rendering backend
implementing the same render_page contract (see incuna.ingest.PageRenderer).
"""

from __future__ import annotations

import base64
import io
import re
import zlib
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .errors import IncunaError

POINTS_PER_INCH = 72.0

_WHITESPACE = b"\x00\t\n\x0c\r "
_DELIMITERS = b"()<>[]{}/%"


class PdfError(IncunaError):
    """The file is not a readable scanned PDF."""


@dataclass(frozen=True)
class PdfRef:
    num: int
    gen: int


class _Lexer:
    """Token reader over the raw PDF bytes, positioned explicitly."""

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def skip_ws(self) -> None:
        data, n = self.data, len(self.data)
        while self.pos < n:
            c = data[self.pos : self.pos + 1]
            if c == b"%":
                eol = data.find(b"\n", self.pos)
                self.pos = n if eol < 0 else eol + 1
            elif c in _WHITESPACE:
                self.pos += 1
            else:
                break

    def peek(self, k: int = 1) -> bytes:
        return self.data[self.pos : self.pos + k]

    def expect(self, token: bytes) -> None:
        if self.data[self.pos : self.pos + len(token)] != token:
            raise PdfError(
                f"expected {token!r} at offset {self.pos}, found "
                f"{self.data[self.pos:self.pos + len(token) + 8]!r}"
            )
        self.pos += len(token)

    def read_regular(self) -> bytes:
        """Bytes up to the next whitespace or delimiter (names, keywords, numbers)."""
        start = self.pos
        data, n = self.data, len(self.data)
        while self.pos < n:
            c = data[self.pos]
            if bytes([c]) in _WHITESPACE or bytes([c]) in _DELIMITERS:
                break
            self.pos += 1
        return data[start : self.pos]


_NUMBER_RE = re.compile(rb"^[+-]?(\d+\.?\d*|\.\d+)$")


def _parse_object(lex: _Lexer):
    """Parse one PDF object at the lexer position (dict/array/name/num/str/ref)."""
    lex.skip_ws()
    head = lex.peek(2)
    if head == b"<<":
        return _parse_dict(lex)
    if head[:1] == b"<":
        return _parse_hex_string(lex)
    if head[:1] == b"(":
        return _parse_literal_string(lex)
    if head[:1] == b"[":
        lex.pos += 1
        items = []
        while True:
            lex.skip_ws()
            if lex.peek() == b"]":
                lex.pos += 1
                return items
            if not lex.peek():
                raise PdfError("unterminated array")
            items.append(_parse_object(lex))
    if head[:1] == b"/":
        lex.pos += 1
        return _decode_name(lex.read_regular())

    word = lex.read_regular()
    if word == b"true":
        return True
    if word == b"false":
        return False
    if word == b"null":
        return None
    if _NUMBER_RE.match(word):
        # lookahead for an indirect reference: <int> <int> R
        if b"." not in word:
            save = lex.pos
            lex.skip_ws()
            second = lex.read_regular()
            if _NUMBER_RE.match(second) and b"." not in second:
                lex.skip_ws()
                third = lex.read_regular()
                if third == b"R":
                    return PdfRef(int(word), int(second))
            lex.pos = save
            return int(word)
        return float(word)
    raise PdfError(f"unparseable token {word!r} at offset {lex.pos}")


def _decode_name(raw: bytes) -> str:
    if b"#" not in raw:
        return raw.decode("latin-1")
    out = bytearray()
    i = 0
    while i < len(raw):
        if raw[i : i + 1] == b"#" and i + 3 <= len(raw):
            out.append(int(raw[i + 1 : i + 3], 16))
            i += 3
        else:
            out.append(raw[i])
            i += 1
    return out.decode("latin-1")


def _parse_dict(lex: _Lexer) -> dict:
    lex.expect(b"<<")
    out: dict = {}
    while True:
        lex.skip_ws()
        if lex.peek(2) == b">>":
            lex.pos += 2
            return out
        if lex.peek() != b"/":
            raise PdfError(f"expected name key at offset {lex.pos}")
        lex.pos += 1
        key = _decode_name(lex.read_regular())
        out[key] = _parse_object(lex)


def _parse_literal_string(lex: _Lexer) -> bytes:
    lex.expect(b"(")
    depth = 1
    out = bytearray()
    data, n = lex.data, len(lex.data)
    while lex.pos < n:
        c = data[lex.pos]
        if c == 0x5C and lex.pos + 1 < n:  # backslash escape
            out += data[lex.pos : lex.pos + 2]
            lex.pos += 2
            continue
        if c == 0x28:
            depth += 1
        elif c == 0x29:
            depth -= 1
            if depth == 0:
                lex.pos += 1
                return bytes(out)
        out.append(c)
        lex.pos += 1
    raise PdfError("unterminated literal string")


def _parse_hex_string(lex: _Lexer) -> bytes:
    lex.expect(b"<")
    end = lex.data.find(b">", lex.pos)
    if end < 0:
        raise PdfError("unterminated hex string")
    raw = re.sub(rb"\s", b"", lex.data[lex.pos : end])
    lex.pos = end + 1
    if len(raw) % 2:
        raw += b"0"
    try:
        return bytes.fromhex(raw.decode("ascii"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise PdfError(f"bad hex string ({exc})") from exc


class ScannedPdfReader:
    """Parses a scanned PDF and exposes its pages as rescalable rasters."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        try:
            self._data = self.path.read_bytes()
        except OSError as exc:
            raise PdfError(f"cannot read {self.path}: {exc}") from exc
        if not self._data.startswith(b"%PDF-"):
            raise PdfError(f"{self.path} is not a PDF (missing %PDF- header)")
        self._cache: dict[int, object] = {}
        self._offsets, self._trailer = self._read_xref()
        self._pages = self._collect_pages()

    # -- structure ---------------------------------------------------------

    def _read_xref(self) -> tuple[dict[int, int], dict]:
        tail = self._data[-2048:]
        m = None
        for m in re.finditer(rb"startxref\s+(\d+)", tail):
            pass
        if m is None:
            raise PdfError("no startxref found")
        offsets: dict[int, int] = {}
        trailer: dict = {}
        offset = int(m.group(1))
        seen = set()
        while offset and offset not in seen:
            seen.add(offset)
            lex = _Lexer(self._data, offset)
            lex.skip_ws()
            if lex.peek(4) != b"xref":
                raise PdfError(
                    "cross-reference streams are not supported; "
                    "this reader handles classic scanned PDFs only"
                )
            lex.pos += 4
            while True:
                lex.skip_ws()
                if lex.peek(7) == b"trailer":
                    lex.pos += 7
                    t = _parse_dict(_advance_ws(lex))
                    if not trailer:
                        trailer = t
                    offset = t.get("Prev", 0)
                    break
                start = int(lex.read_regular())
                lex.skip_ws()
                count = int(lex.read_regular())
                lex.skip_ws()
                for i in range(count):
                    entry = self._data[lex.pos : lex.pos + 20]
                    if len(entry) < 18:
                        raise PdfError("truncated xref entry")
                    if entry[17:18] == b"n" and (start + i) not in offsets:
                        offsets[start + i] = int(entry[0:10])
                    lex.pos += 20
        if "Root" not in trailer:
            raise PdfError("trailer has no /Root")
        return offsets, trailer

    def _object_at(self, num: int):
        if num in self._cache:
            return self._cache[num]
        if num not in self._offsets:
            raise PdfError(f"object {num} not in xref table")
        lex = _Lexer(self._data, self._offsets[num])
        lex.skip_ws()
        got_num = int(lex.read_regular())
        lex.skip_ws()
        int(lex.read_regular())  # generation
        lex.skip_ws()
        lex.expect(b"obj")
        if got_num != num:
            raise PdfError(f"xref points to object {got_num}, expected {num}")
        obj = _parse_object(lex)
        if isinstance(obj, dict):
            lex.skip_ws()
            if lex.peek(6) == b"stream":
                lex.pos += 6
                if lex.peek(2) == b"\r\n":
                    lex.pos += 2
                elif lex.peek(1) in (b"\n", b"\r"):
                    lex.pos += 1
                length = self.resolve(obj.get("Length"))
                if not isinstance(length, int):
                    raise PdfError(f"object {num} stream has no usable /Length")
                raw = self._data[lex.pos : lex.pos + length]
                obj = _Stream(obj, raw)
        self._cache[num] = obj
        return obj

    def resolve(self, obj):
        while isinstance(obj, PdfRef):
            obj = self._object_at(obj.num)
        return obj

    def _collect_pages(self) -> list[dict]:
        root = self.resolve(self._trailer["Root"])
        pages_ref = root.get("Pages")
        if pages_ref is None:
            raise PdfError("catalog has no /Pages")
        collected: list[dict] = []

        def walk(node_obj, inherited: dict):
            node = self.resolve(node_obj)
            if not isinstance(node, dict):
                raise PdfError("page tree node is not a dictionary")
            attrs = dict(inherited)
            for key in ("MediaBox", "Resources"):
                if key in node:
                    attrs[key] = node[key]
            if node.get("Type") == "Pages" or "Kids" in node:
                for kid in self.resolve(node.get("Kids", [])):
                    walk(kid, attrs)
            else:
                merged = dict(node)
                for key, value in attrs.items():
                    merged.setdefault(key, value)
                collected.append(merged)

        walk(pages_ref, {})
        return collected

    # -- public API --------------------------------------------------------

    @property
    def page_count(self) -> int:
        return len(self._pages)

    def page_size_pts(self, page_number: int) -> tuple[float, float]:
        """MediaBox extent of a 1-based page, in points."""
        page = self._page(page_number)
        box = [self.resolve(v) for v in self.resolve(page.get("MediaBox", []))]
        if len(box) != 4:
            raise PdfError(f"page {page_number} has no usable /MediaBox")
        return abs(box[2] - box[0]), abs(box[3] - box[1])

    def page_image(self, page_number: int) -> Image.Image:
        """The embedded scan of a 1-based page, at its stored resolution."""
        page = self._page(page_number)
        resources = self.resolve(page.get("Resources", {}))
        xobjects = self.resolve(resources.get("XObject", {})) if resources else {}
        best: _Stream | None = None
        best_area = -1
        for ref in xobjects.values():
            candidate = self.resolve(ref)
            if not isinstance(candidate, _Stream):
                continue
            if candidate.dict.get("Subtype") != "Image":
                continue
            width = self.resolve(candidate.dict.get("Width", 0))
            height = self.resolve(candidate.dict.get("Height", 0))
            if width * height > best_area:
                best, best_area = candidate, width * height
        if best is None:
            raise PdfError(f"page {page_number} has no embedded raster image")
        return self._decode_image(best, page_number)

    def render_page(self, page_number: int, dpi: int) -> Image.Image:
        """Embedded scan rescaled so the page prints at `dpi` pixels per inch."""
        if dpi <= 0:
            raise ValueError("dpi must be positive")
        image = self.page_image(page_number)
        width_pts, height_pts = self.page_size_pts(page_number)
        target = (
            max(1, round(width_pts / POINTS_PER_INCH * dpi)),
            max(1, round(height_pts / POINTS_PER_INCH * dpi)),
        )
        if image.size != target:
            image = image.resize(target, Image.LANCZOS)
        return image

    # -- decoding ----------------------------------------------------------

    def _page(self, page_number: int) -> dict:
        if not (1 <= page_number <= len(self._pages)):
            raise PdfError(f"page {page_number} out of range 1..{len(self._pages)}")
        return self._pages[page_number - 1]

    def _decode_image(self, stream: "_Stream", page_number: int) -> Image.Image:
        info = stream.dict
        filters = self.resolve(info.get("Filter", []))
        if isinstance(filters, str):
            filters = [filters]
        parms = self.resolve(info.get("DecodeParms"))
        if parms:
            parms_list = parms if isinstance(parms, list) else [parms]
            for p in parms_list:
                p = self.resolve(p)
                if isinstance(p, dict) and self.resolve(p.get("Predictor", 1)) not in (None, 1):
                    raise PdfError(f"page {page_number}: predictor-coded image data unsupported")

        data = stream.raw
        for i, name in enumerate(filters):
            name = self.resolve(name)
            if name in ("ASCII85Decode", "A85"):
                data = _ascii85_decode(data)
            elif name in ("FlateDecode", "Fl"):
                try:
                    data = zlib.decompress(data)
                except zlib.error as exc:
                    raise PdfError(f"page {page_number}: bad Flate data ({exc})") from exc
            elif name in ("DCTDecode", "DCT"):
                if i != len(filters) - 1:
                    raise PdfError(f"page {page_number}: DCTDecode must be the last filter")
                try:
                    return Image.open(io.BytesIO(data)).copy()
                except OSError as exc:
                    raise PdfError(f"page {page_number}: bad JPEG data ({exc})") from exc
            else:
                raise PdfError(f"page {page_number}: unsupported filter /{name}")

        width = self.resolve(info.get("Width"))
        height = self.resolve(info.get("Height"))
        bpc = self.resolve(info.get("BitsPerComponent", 8))
        if bpc != 8:
            raise PdfError(f"page {page_number}: {bpc}-bit samples unsupported")
        mode = self._color_mode(info.get("ColorSpace"), page_number)
        expected = width * height * len(mode)
        if len(data) < expected:
            raise PdfError(
                f"page {page_number}: image data truncated "
                f"({len(data)} bytes, expected {expected})"
            )
        return Image.frombytes(mode, (width, height), data[:expected])

    def _color_mode(self, colorspace, page_number: int) -> str:
        cs = self.resolve(colorspace)
        if isinstance(cs, list) and cs and self.resolve(cs[0]) == "ICCBased":
            icc = self.resolve(cs[1]) if len(cs) > 1 else None
            n = self.resolve(icc.dict.get("N", 3)) if isinstance(icc, _Stream) else 3
            return {1: "L", 3: "RGB"}.get(n, "RGB")
        if cs == "DeviceRGB":
            return "RGB"
        if cs == "DeviceGray":
            return "L"
        raise PdfError(f"page {page_number}: unsupported color space {cs!r}")


@dataclass
class _Stream:
    dict: dict
    raw: bytes


def _advance_ws(lex: _Lexer) -> _Lexer:
    lex.skip_ws()
    return lex


def _ascii85_decode(data: bytes) -> bytes:
    end = data.rfind(b"~>")
    if end >= 0:
        data = data[:end]
    if data.startswith(b"<~"):
        data = data[2:]
    try:
        return base64.a85decode(data, ignorechars=b" \t\n\r\v\f\x00")
    except ValueError as exc:
        raise PdfError(f"bad ASCII85 data ({exc})") from exc
