"""Minimal PDF reader and page rasterizer.

No PDF library is available in this environment, so this module implements
the small slice of the format that slide exports actually use: classic
cross-reference tables, Flate/ASCII85/ASCIIHex/DCT-encoded image XObjects,
and content streams that place axis-aligned images via q/Q/cm/Do. Pages
render onto a white canvas at a caller-chosen DPI; vector drawing operators
are ignored. Anything outside that slice (xref streams, rotated images,
sub-8-bit samples, exotic color spaces) raises PdfError with a message
naming the unsupported construct rather than guessing.
"""

from __future__ import annotations

import base64
import binascii
import io
import re
import zlib
from dataclasses import dataclass

from PIL import Image

from .errors import PdfError

_WHITESPACE = b"\x00\t\n\x0c\r "
_DELIMITERS = b"()<>[]{}/%"


class Name(str):
    """A PDF name token; distinct from string literals."""


@dataclass(frozen=True)
class Ref:
    num: int
    gen: int


class _Lexer:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def skip_ws(self) -> None:
        data = self.data
        while self.pos < len(data):
            b = data[self.pos]
            if b in _WHITESPACE:
                self.pos += 1
            elif b == 0x25:  # % comment to end of line
                nl = data.find(b"\n", self.pos)
                self.pos = len(data) if nl < 0 else nl + 1
            else:
                return

    def peek(self) -> int:
        return self.data[self.pos] if self.pos < len(self.data) else -1

    def read_regular_token(self) -> bytes:
        """A run of non-delimiter, non-whitespace bytes (operators, keywords, numbers)."""
        self.skip_ws()
        start = self.pos
        data = self.data
        while self.pos < len(data) and data[self.pos] not in _WHITESPACE and data[self.pos] not in _DELIMITERS:
            self.pos += 1
        return data[start:self.pos]


_NUMBER_RE = re.compile(rb"^[+-]?(\d+\.?\d*|\.\d+)$")


class _Parser(_Lexer):
    """Parses one object at the current position (numbers, names, strings, arrays, dicts)."""

    def parse_object(self):
        self.skip_ws()
        b = self.peek()
        if b < 0:
            raise PdfError("unexpected end of data while parsing object")
        ch = bytes([b])
        if ch == b"/":
            return self._parse_name()
        if ch == b"(":
            return self._parse_literal_string()
        if ch == b"[":
            return self._parse_array()
        if ch == b"<":
            if self.data[self.pos:self.pos + 2] == b"<<":
                return self._parse_dict()
            return self._parse_hex_string()
        token = self.read_regular_token()
        if not token:
            raise PdfError(f"unparseable byte {ch!r} at offset {self.pos}")
        if token == b"true":
            return True
        if token == b"false":
            return False
        if token == b"null":
            return None
        if _NUMBER_RE.match(token):
            return self._number_or_ref(token)
        raise PdfError(f"unexpected token {token!r} at offset {self.pos}")

    def _number_or_ref(self, token: bytes):
        if b"." in token:
            return float(token)
        value = int(token)
        # Lookahead for "<num> <gen> R" indirect references.
        saved = self.pos
        self.skip_ws()
        second = self.read_regular_token()
        if second.isdigit():
            self.skip_ws()
            third = self.read_regular_token()
            if third == b"R":
                return Ref(value, int(second))
        self.pos = saved
        return value

    def _parse_name(self) -> Name:
        self.pos += 1  # consume '/'
        start = self.pos
        data = self.data
        while self.pos < len(data) and data[self.pos] not in _WHITESPACE and data[self.pos] not in _DELIMITERS:
            self.pos += 1
        raw = data[start:self.pos]
        if b"#" in raw:
            raw = re.sub(rb"#([0-9A-Fa-f]{2})", lambda m: bytes([int(m.group(1), 16)]), raw)
        return Name(raw.decode("latin-1"))

    def _parse_literal_string(self) -> bytes:
        self.pos += 1
        out = bytearray()
        depth = 1
        data = self.data
        while self.pos < len(data):
            b = data[self.pos]
            self.pos += 1
            if b == 0x5C:  # backslash escape
                if self.pos >= len(data):
                    break
                esc = data[self.pos]
                self.pos += 1
                mapping = {0x6E: 10, 0x72: 13, 0x74: 9, 0x62: 8, 0x66: 12}
                if esc in mapping:
                    out.append(mapping[esc])
                elif 0x30 <= esc <= 0x37:  # octal, up to 3 digits
                    digits = chr(esc)
                    while len(digits) < 3 and self.pos < len(data) and 0x30 <= data[self.pos] <= 0x37:
                        digits += chr(data[self.pos])
                        self.pos += 1
                    out.append(int(digits, 8) & 0xFF)
                elif esc in (10, 13):  # line continuation
                    if esc == 13 and self.pos < len(data) and data[self.pos] == 10:
                        self.pos += 1
                else:
                    out.append(esc)
            elif b == 0x28:
                depth += 1
                out.append(b)
            elif b == 0x29:
                depth -= 1
                if depth == 0:
                    return bytes(out)
                out.append(b)
            else:
                out.append(b)
        raise PdfError("unterminated literal string")

    def _parse_hex_string(self) -> bytes:
        self.pos += 1
        end = self.data.find(b">", self.pos)
        if end < 0:
            raise PdfError("unterminated hex string")
        hexpart = re.sub(rb"\s", b"", self.data[self.pos:end])
        self.pos = end + 1
        if len(hexpart) % 2:
            hexpart += b"0"
        return binascii.unhexlify(hexpart)

    def _parse_array(self) -> list:
        self.pos += 1
        items = []
        while True:
            self.skip_ws()
            if self.peek() == 0x5D:
                self.pos += 1
                return items
            if self.peek() < 0:
                raise PdfError("unterminated array")
            items.append(self.parse_object())

    def _parse_dict(self) -> dict:
        self.pos += 2
        result = {}
        while True:
            self.skip_ws()
            if self.data[self.pos:self.pos + 2] == b">>":
                self.pos += 2
                return result
            if self.peek() != 0x2F:
                raise PdfError(f"dictionary key must be a name at offset {self.pos}")
            key = self._parse_name()
            result[str(key)] = self.parse_object()


def _undo_png_predictor(data: bytes, colors: int, bpc: int, columns: int) -> bytes:
    bpp = max(1, colors * bpc // 8)
    rowlen = (columns * colors * bpc + 7) // 8
    out = bytearray()
    prev = bytearray(rowlen)
    pos = 0
    while pos + 1 + rowlen <= len(data):
        ftype = data[pos]
        row = bytearray(data[pos + 1:pos + 1 + rowlen])
        pos += 1 + rowlen
        if ftype == 1:  # Sub
            for i in range(bpp, rowlen):
                row[i] = (row[i] + row[i - bpp]) & 0xFF
        elif ftype == 2:  # Up
            for i in range(rowlen):
                row[i] = (row[i] + prev[i]) & 0xFF
        elif ftype == 3:  # Average
            for i in range(rowlen):
                left = row[i - bpp] if i >= bpp else 0
                row[i] = (row[i] + (left + prev[i]) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            for i in range(rowlen):
                a = row[i - bpp] if i >= bpp else 0
                b = prev[i]
                c = prev[i - bpp] if i >= bpp else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                pred = a if pa <= pb and pa <= pc else (b if pb <= pc else c)
                row[i] = (row[i] + pred) & 0xFF
        elif ftype != 0:
            raise PdfError(f"unknown PNG predictor filter {ftype}")
        out.extend(row)
        prev = row
    return bytes(out)


def _decode_ascii85(data: bytes) -> bytes:
    body = data.strip()
    if body.startswith(b"<~"):
        body = body[2:]
    if body.endswith(b"~>"):
        body = body[:-2]
    return base64.a85decode(body, ignorechars=b" \t\n\r\x0b\x0c")


class PdfDocument:
    """A parsed PDF: page tree plus enough machinery to rasterize image-based pages."""

    def __init__(self, data: bytes):
        self._data = data
        self._cache: dict[int, object] = {}
        if b"%PDF-" not in data[:1024]:
            raise PdfError("missing %PDF header")
        self._xref, self._trailer = self._load_xref()
        self._pages = self._collect_pages()
        if not self._pages:
            raise PdfError("document has no pages")

    @classmethod
    def open(cls, path) -> "PdfDocument":
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise PdfError(f"cannot read {path}: {exc}") from exc
        return cls(data)

    @property
    def page_count(self) -> int:
        return len(self._pages)

    # -- object plumbing ----------------------------------------------------

    def _load_xref(self):
        tail = self._data[-2048:]
        at = tail.rfind(b"startxref")
        if at < 0:
            raise PdfError("startxref not found")
        lexer = _Parser(tail, at + len(b"startxref"))
        offset = lexer.parse_object()
        if not isinstance(offset, int):
            raise PdfError("startxref offset is not an integer")
        xref: dict[int, int] = {}
        trailer: dict = {}
        seen_offsets = set()
        while True:
            if offset in seen_offsets:
                break
            seen_offsets.add(offset)
            parser = _Parser(self._data, offset)
            keyword = parser.read_regular_token()
            if keyword != b"xref":
                raise PdfError("cross-reference streams are not supported by this reader")
            section_trailer = self._parse_xref_table(parser, xref)
            if not trailer:
                trailer = section_trailer
            prev = section_trailer.get("Prev")
            if prev is None:
                break
            offset = int(prev)
        if "Root" not in trailer:
            raise PdfError("trailer has no /Root")
        return xref, trailer

    def _parse_xref_table(self, parser: _Parser, xref: dict[int, int]) -> dict:
        while True:
            parser.skip_ws()
            token_start = parser.pos
            token = parser.read_regular_token()
            if token == b"trailer":
                trailer = parser.parse_object()
                if not isinstance(trailer, dict):
                    raise PdfError("trailer is not a dictionary")
                return trailer
            if not token.isdigit():
                raise PdfError(f"malformed xref section at offset {token_start}")
            first = int(token)
            count = int(parser.read_regular_token())
            for i in range(count):
                offset_tok = parser.read_regular_token()
                parser.read_regular_token()  # generation
                type_tok = parser.read_regular_token()
                if not offset_tok.isdigit() or type_tok not in (b"n", b"f"):
                    raise PdfError("truncated xref entry")
                num = first + i
                # Earlier sections in the /Prev chain must not override newer ones.
                if type_tok == b"n" and num not in xref:
                    xref[num] = int(offset_tok)

    def _get(self, ref: Ref):
        if ref.num in self._cache:
            return self._cache[ref.num]
        offset = self._xref.get(ref.num)
        if offset is None:
            raise PdfError(f"object {ref.num} not in cross-reference table")
        parser = _Parser(self._data, offset)
        num = parser.read_regular_token()
        gen = parser.read_regular_token()
        kw = parser.read_regular_token()
        if not num.isdigit() or not gen.isdigit() or kw != b"obj":
            raise PdfError(f"object {ref.num}: malformed header at offset {offset}")
        obj = parser.parse_object()
        parser.skip_ws()
        save = parser.pos
        token = parser.read_regular_token()
        if token == b"stream":
            if not isinstance(obj, dict):
                raise PdfError(f"object {ref.num}: stream without a dictionary")
            data_start = parser.pos
            if self._data[data_start:data_start + 2] == b"\r\n":
                data_start += 2
            elif self._data[data_start:data_start + 1] in (b"\n", b"\r"):
                data_start += 1
            length = self.resolve(obj.get("Length"))
            if not isinstance(length, int):
                raise PdfError(f"object {ref.num}: stream /Length missing or invalid")
            raw = self._data[data_start:data_start + length]
            obj = _Stream(obj, raw)
        else:
            parser.pos = save
        self._cache[ref.num] = obj
        return obj

    def resolve(self, obj):
        while isinstance(obj, Ref):
            obj = self._get(obj)
        return obj

    # -- page tree -----------------------------------------------------------

    _INHERITED = ("Resources", "MediaBox")

    def _collect_pages(self) -> list[dict]:
        root = self.resolve(self._trailer["Root"])
        pages_ref = root.get("Pages")
        if pages_ref is None:
            raise PdfError("catalog has no /Pages")
        collected: list[dict] = []
        visited: set[int] = set()

        def walk(node_obj, inherited: dict):
            node = self.resolve(node_obj)
            if isinstance(node_obj, Ref):
                if node_obj.num in visited:
                    raise PdfError("cycle in page tree")
                visited.add(node_obj.num)
            if not isinstance(node, dict):
                raise PdfError("page tree node is not a dictionary")
            passed = dict(inherited)
            for key in self._INHERITED:
                if key in node:
                    passed[key] = node[key]
            node_type = node.get("Type")
            if node_type == "Pages" or "Kids" in node:
                for kid in self.resolve(node.get("Kids", [])):
                    walk(kid, passed)
            else:
                page = dict(node)
                for key, value in passed.items():
                    page.setdefault(key, value)
                collected.append(page)

        walk(pages_ref, {})
        return collected

    def page_size(self, index: int) -> tuple[float, float]:
        """Width and height in points for 1-based page index."""
        page = self._page(index)
        box = [float(self.resolve(v)) for v in self.resolve(page.get("MediaBox"))]
        if len(box) != 4:
            raise PdfError(f"page {index}: bad /MediaBox")
        return abs(box[2] - box[0]), abs(box[3] - box[1])

    def _page(self, index: int) -> dict:
        if not 1 <= index <= len(self._pages):
            raise PdfError(f"page {index} out of range 1..{len(self._pages)}")
        return self._pages[index - 1]

    # -- rasterization ---------------------------------------------------------

    def render_page(self, index: int, dpi: int) -> Image.Image:
        page = self._page(index)
        width_pt, height_pt = self.page_size(index)
        scale = dpi / 72.0
        canvas = Image.new("RGB", (max(1, round(width_pt * scale)), max(1, round(height_pt * scale))), "white")
        content = self._page_content(page)
        resources = self.resolve(page.get("Resources", {})) or {}
        identity = (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
        self._run_content(content, resources, canvas, identity, scale, height_pt, depth=0)
        return canvas

    def _page_content(self, page: dict) -> bytes:
        contents = self.resolve(page.get("Contents"))
        if contents is None:
            return b""
        parts = contents if isinstance(contents, list) else [contents]
        chunks = []
        for part in parts:
            stream = self.resolve(part)
            if not isinstance(stream, _Stream):
                raise PdfError("page /Contents is not a stream")
            chunks.append(_decode_stream(stream, self))
        return b"\n".join(chunks)

    def _run_content(self, content: bytes, resources: dict, canvas: Image.Image,
                     ctm: tuple, scale: float, page_h_pt: float, depth: int) -> None:
        if depth > 8:
            raise PdfError("form XObjects nested too deeply")
        parser = _Parser(content)
        stack: list = []
        ctm_stack: list[tuple] = []
        while True:
            parser.skip_ws()
            b = parser.peek()
            if b < 0:
                return
            if bytes([b]) in b"/([<" or bytes([b]).isdigit() or b in (0x2B, 0x2D, 0x2E):
                stack.append(parser.parse_object())
                continue
            op = parser.read_regular_token()
            if not op:
                # Unknown delimiter (e.g. stray ')'): skip one byte.
                parser.pos += 1
                continue
            if op == b"q":
                ctm_stack.append(ctm)
            elif op == b"Q":
                ctm = ctm_stack.pop() if ctm_stack else ctm
            elif op == b"cm" and len(stack) >= 6:
                m = tuple(float(v) for v in stack[-6:])
                ctm = _mat_mul(m, ctm)
            elif op == b"Do" and stack:
                self._do_xobject(stack[-1], resources, canvas, ctm, scale, page_h_pt, depth)
            elif op == b"BI":
                end = content.find(b"EI", parser.pos)
                parser.pos = len(content) if end < 0 else end + 2
            stack.clear()

    def _do_xobject(self, name, resources: dict, canvas: Image.Image,
                    ctm: tuple, scale: float, page_h_pt: float, depth: int) -> None:
        xobjects = self.resolve(resources.get("XObject", {})) or {}
        target = self.resolve(xobjects.get(str(name)))
        if not isinstance(target, _Stream):
            return  # unknown or non-stream XObject: nothing to draw
        subtype = target.dict.get("Subtype")
        if subtype == "Image":
            self._paste_image(target, canvas, ctm, scale, page_h_pt)
        elif subtype == "Form":
            matrix = self.resolve(target.dict.get("Matrix", [1, 0, 0, 1, 0, 0]))
            inner_ctm = _mat_mul(tuple(float(v) for v in matrix), ctm)
            inner_res = self.resolve(target.dict.get("Resources")) or resources
            self._run_content(_decode_stream(target, self), inner_res, canvas,
                              inner_ctm, scale, page_h_pt, depth + 1)

    def _paste_image(self, stream: "_Stream", canvas: Image.Image,
                     ctm: tuple, scale: float, page_h_pt: float) -> None:
        a, b, c, d, e, f = ctm
        if abs(b) > 1e-4 or abs(c) > 1e-4:
            raise PdfError("rotated or skewed image placement is not supported")
        corners = [(e, f), (a + e, d + f)]
        xs = sorted(pt[0] for pt in corners)
        ys = sorted(pt[1] for pt in corners)
        left = round(xs[0] * scale)
        right = round(xs[1] * scale)
        top = round((page_h_pt - ys[1]) * scale)
        bottom = round((page_h_pt - ys[0]) * scale)
        if right <= left or bottom <= top:
            return
        image = _decode_image(stream, self)
        if a < 0:
            image = image.transpose(Image.Transpose.FLIP_LEFT_RIGHT)
        if d < 0:
            image = image.transpose(Image.Transpose.FLIP_TOP_BOTTOM)
        image = image.resize((right - left, bottom - top), Image.Resampling.LANCZOS)
        canvas.paste(image, (left, top))


class _Stream:
    def __init__(self, dictionary: dict, raw: bytes):
        self.dict = dictionary
        self.raw = raw


def _mat_mul(m: tuple, n: tuple) -> tuple:
    ma, mb, mc, md, me, mf = m
    na, nb, nc, nd, ne, nf = n
    return (
        ma * na + mb * nc,
        ma * nb + mb * nd,
        mc * na + md * nc,
        mc * nb + md * nd,
        me * na + mf * nc + ne,
        me * nb + mf * nd + nf,
    )


def _filter_list(stream: _Stream, doc: PdfDocument) -> list[tuple[str, dict]]:
    filters = doc.resolve(stream.dict.get("Filter"))
    parms = doc.resolve(stream.dict.get("DecodeParms"))
    if filters is None:
        return []
    if not isinstance(filters, list):
        filters = [filters]
        parms = [parms]
    elif not isinstance(parms, list):
        parms = [parms] * len(filters)
    out = []
    for i, name in enumerate(filters):
        parm = doc.resolve(parms[i]) if i < len(parms) else None
        out.append((str(doc.resolve(name)), parm or {}))
    return out


def _apply_flate(data: bytes, parm: dict, doc: PdfDocument) -> bytes:
    try:
        inflated = zlib.decompress(data)
    except zlib.error as exc:
        raise PdfError(f"FlateDecode failed: {exc}") from exc
    predictor = doc.resolve(parm.get("Predictor", 1))
    if predictor and int(predictor) >= 10:
        inflated = _undo_png_predictor(
            inflated,
            int(doc.resolve(parm.get("Colors", 1))),
            int(doc.resolve(parm.get("BitsPerComponent", 8))),
            int(doc.resolve(parm.get("Columns", 1))),
        )
    elif predictor and int(predictor) not in (0, 1):
        raise PdfError(f"unsupported predictor {predictor}")
    return inflated


def _decode_stream(stream: _Stream, doc: PdfDocument) -> bytes:
    """Fully decode a non-image stream (content streams, ICC profiles)."""
    data = stream.raw
    for name, parm in _filter_list(stream, doc):
        if name in ("FlateDecode", "Fl"):
            data = _apply_flate(data, parm, doc)
        elif name in ("ASCII85Decode", "A85"):
            data = _decode_ascii85(data)
        elif name in ("ASCIIHexDecode", "AHx"):
            data = binascii.unhexlify(re.sub(rb"[\s>]", b"", data))
        else:
            raise PdfError(f"unsupported stream filter {name}")
    return data


def _color_mode(colorspace, doc: PdfDocument) -> str:
    cs = doc.resolve(colorspace)
    if isinstance(cs, list) and cs and str(cs[0]) == "ICCBased":
        profile = doc.resolve(cs[1])
        n = int(doc.resolve(profile.dict.get("N", 3))) if isinstance(profile, _Stream) else 3
        return {1: "L", 3: "RGB"}.get(n) or _unsupported_cs(cs)
    name = str(cs)
    if name == "DeviceRGB":
        return "RGB"
    if name == "DeviceGray":
        return "L"
    return _unsupported_cs(cs)


def _unsupported_cs(cs) -> str:
    raise PdfError(f"unsupported image color space {cs!r}")


def _decode_image(stream: _Stream, doc: PdfDocument) -> Image.Image:
    info = stream.dict
    data = stream.raw
    for name, parm in _filter_list(stream, doc):
        if name in ("FlateDecode", "Fl"):
            data = _apply_flate(data, parm, doc)
        elif name in ("ASCII85Decode", "A85"):
            data = _decode_ascii85(data)
        elif name in ("ASCIIHexDecode", "AHx"):
            data = binascii.unhexlify(re.sub(rb"[\s>]", b"", data))
        elif name in ("DCTDecode", "DCT"):
            try:
                return Image.open(io.BytesIO(data)).convert("RGB")
            except OSError as exc:
                raise PdfError(f"DCTDecode image unreadable: {exc}") from exc
        else:
            raise PdfError(f"unsupported image filter {name}")
    width = int(doc.resolve(info.get("Width", 0)))
    height = int(doc.resolve(info.get("Height", 0)))
    bpc = int(doc.resolve(info.get("BitsPerComponent", 8)))
    if width <= 0 or height <= 0:
        raise PdfError("image has no dimensions")
    if bpc != 8:
        raise PdfError(f"only 8-bit samples supported, got {bpc}")
    mode = _color_mode(info.get("ColorSpace"), doc)
    needed = width * height * len(mode)
    if len(data) < needed:
        raise PdfError(f"image data truncated: {len(data)} < {needed}")
    return Image.frombytes(mode, (width, height), data[:needed]).convert("RGB")


def page_count(path) -> int:
    return PdfDocument.open(path).page_count
