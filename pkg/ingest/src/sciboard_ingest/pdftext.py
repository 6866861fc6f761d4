"""Positioned text extraction from PDF files.

Implements just enough of the PDF object model for machine-generated papers:
a whole-file object scan (no xref parsing, so damaged tables are harmless),
the common non-image stream filters, and a content-stream interpreter for the
text operators. The result is a list of text runs with page coordinates;
layout decisions live in `document`.

Known limits, by design: text inside form XObjects is not traversed, glyph
widths are not computed (line assembly relies on run start positions), and
simple fonts are decoded as WinAnsi, which covers the Latin-script output of
the common report generators.
"""

from __future__ import annotations

import base64
import re
import zlib
from dataclasses import dataclass
from typing import Any, Iterator, NamedTuple

from .errors import PdfSyntaxError

_WHITESPACE = b"\x00\t\n\x0c\r "
_DELIMITERS = b"()<>[]{}/%"

_NUMBER_RE = re.compile(rb"[+-]?(?:\d+(?:\.\d*)?|\.\d+)")
_OBJ_RE = re.compile(rb"(\d+)\s+(\d+)\s+obj\b")
_TRAILER_RE = re.compile(rb"trailer\b")

# TJ shifts at or beyond this many thousandths of an em read as word gaps.
TJ_SPACE_KERN = -80.0

_IDENTITY = (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)


class Name(str):
    """A PDF name token, kept distinct from text strings."""

    __slots__ = ()


class _Op(str):
    """A content-stream operator token."""

    __slots__ = ()


@dataclass(frozen=True)
class Ref:
    num: int
    gen: int


class StreamObject(NamedTuple):
    dictionary: dict[str, Any]
    raw: bytes


@dataclass(frozen=True)
class TextRun:
    """One shown string with the page coordinates of its start point."""

    x: float
    y: float
    text: str


# ---------------------------------------------------------------------------
# Lexing and object parsing


def _skip_ws(data: bytes, pos: int) -> int:
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == 0x25:  # % starts a comment running to end of line
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    return pos


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    start = pos
    n = len(data)
    while pos < n and data[pos] not in _WHITESPACE and data[pos] not in _DELIMITERS:
        pos += 1
    return data[start:pos], pos


_STRING_ESCAPES = {
    ord("n"): 0x0A,
    ord("r"): 0x0D,
    ord("t"): 0x09,
    ord("b"): 0x08,
    ord("f"): 0x0C,
}


def _parse_literal_string(data: bytes, pos: int) -> tuple[bytes, int]:
    pos += 1  # past "("
    depth = 1
    out = bytearray()
    n = len(data)
    while pos < n:
        c = data[pos]
        if c == 0x5C:  # backslash
            pos += 1
            if pos >= n:
                break
            e = data[pos]
            if e in _STRING_ESCAPES:
                out.append(_STRING_ESCAPES[e])
                pos += 1
            elif e in b"()\\":
                out.append(e)
                pos += 1
            elif 0x30 <= e <= 0x37:  # up to three octal digits
                code = 0
                digits = 0
                while pos < n and digits < 3 and 0x30 <= data[pos] <= 0x37:
                    code = code * 8 + (data[pos] - 0x30)
                    pos += 1
                    digits += 1
                out.append(code & 0xFF)
            elif e == 0x0D:  # escaped EOL continues the string
                pos += 1
                if pos < n and data[pos] == 0x0A:
                    pos += 1
            elif e == 0x0A:
                pos += 1
            else:  # the backslash is dropped, the char kept
                out.append(e)
                pos += 1
        elif c == 0x28:
            depth += 1
            out.append(c)
            pos += 1
        elif c == 0x29:
            depth -= 1
            if depth == 0:
                return bytes(out), pos + 1
            out.append(c)
            pos += 1
        elif c == 0x0D:  # raw EOL normalizes to \n
            out.append(0x0A)
            pos += 1
            if pos < n and data[pos] == 0x0A:
                pos += 1
        else:
            out.append(c)
            pos += 1
    raise PdfSyntaxError("unterminated literal string")


def _parse_hex_string(data: bytes, pos: int) -> tuple[bytes, int]:
    pos += 1  # past "<"
    digits: list[str] = []
    n = len(data)
    while pos < n:
        c = data[pos]
        if c == 0x3E:  # >
            pos += 1
            break
        if c in _WHITESPACE:
            pos += 1
            continue
        digits.append(chr(c))
        pos += 1
    else:
        raise PdfSyntaxError("unterminated hex string")
    if len(digits) % 2:
        digits.append("0")
    try:
        return bytes.fromhex("".join(digits)), pos
    except ValueError as exc:
        raise PdfSyntaxError(f"bad hex string: {exc}") from exc


def _parse_name(data: bytes, pos: int) -> tuple[Name, int]:
    pos += 1  # past "/"
    out = bytearray()
    n = len(data)
    while pos < n and data[pos] not in _WHITESPACE and data[pos] not in _DELIMITERS:
        c = data[pos]
        if c == 0x23 and pos + 2 < n:  # #xx hex escape
            try:
                out.append(int(data[pos + 1 : pos + 3], 16))
                pos += 3
                continue
            except ValueError:
                pass
        out.append(c)
        pos += 1
    return Name(out.decode("latin-1")), pos


def _parse_number(token: bytes) -> int | float:
    text = token.decode("latin-1")
    if "." in text:
        return float(text)
    return int(text)


def _try_ref(data: bytes, pos: int) -> tuple[int, int] | None:
    """Generation number and end offset if an `N R` tail follows, else None."""
    p = _skip_ws(data, pos)
    token, p = _read_token(data, p)
    if not token or not token.isdigit():
        return None
    p2 = _skip_ws(data, p)
    kw, p3 = _read_token(data, p2)
    if kw != b"R":
        return None
    return int(token), p3


def parse_value(data: bytes, pos: int) -> tuple[Any, int]:
    """One PDF object starting at or after `pos`; returns (value, end offset).

    Values map to dict, list, Name, bytes (strings), int, float, bool, None,
    or Ref for indirect references.
    """
    pos = _skip_ws(data, pos)
    if pos >= len(data):
        raise PdfSyntaxError("unexpected end of data")
    c = data[pos]
    if c == 0x2F:
        return _parse_name(data, pos)
    if c == 0x28:
        return _parse_literal_string(data, pos)
    if c == 0x3C:
        if data[pos + 1 : pos + 2] == b"<":
            return _parse_dict(data, pos)
        return _parse_hex_string(data, pos)
    if c == 0x5B:
        return _parse_array(data, pos)
    token, end = _read_token(data, pos)
    if not token:
        raise PdfSyntaxError(f"unexpected delimiter {chr(c)!r} at offset {pos}")
    if token == b"true":
        return True, end
    if token == b"false":
        return False, end
    if token == b"null":
        return None, end
    if _NUMBER_RE.fullmatch(token):
        value = _parse_number(token)
        if isinstance(value, int) and value >= 0:
            ref = _try_ref(data, end)
            if ref is not None:
                gen, end = ref
                return Ref(value, gen), end
        return value, end
    raise PdfSyntaxError(f"unexpected token {token!r} at offset {pos}")


def _parse_dict(data: bytes, pos: int) -> tuple[dict[str, Any], int]:
    pos += 2  # past "<<"
    out: dict[str, Any] = {}
    while True:
        pos = _skip_ws(data, pos)
        if data[pos : pos + 2] == b">>":
            return out, pos + 2
        if pos >= len(data):
            raise PdfSyntaxError("unterminated dictionary")
        if data[pos] != 0x2F:
            raise PdfSyntaxError(f"dictionary key at offset {pos} is not a name")
        key, pos = _parse_name(data, pos)
        value, pos = parse_value(data, pos)
        out[str(key)] = value


def _parse_array(data: bytes, pos: int) -> tuple[list[Any], int]:
    pos += 1  # past "["
    out: list[Any] = []
    while True:
        pos = _skip_ws(data, pos)
        if pos >= len(data):
            raise PdfSyntaxError("unterminated array")
        if data[pos] == 0x5D:
            return out, pos + 1
        value, pos = parse_value(data, pos)
        out.append(value)


# ---------------------------------------------------------------------------
# Stream filters


def _decode_a85(data: bytes) -> bytes:
    text = bytes(data).strip(b"\x00\t\n\x0c\r ")
    if text.startswith(b"<~"):
        text = text[2:]
    if text.endswith(b"~>"):
        text = text[:-2]
    try:
        return base64.a85decode(text, ignorechars=b"\x00\t\n\x0c\r ")
    except ValueError as exc:
        raise PdfSyntaxError(f"bad ASCII85 stream: {exc}") from exc


def _decode_ahx(data: bytes) -> bytes:
    text = bytes(data).split(b">")[0]
    hx = b"".join(text.split())
    if len(hx) % 2:
        hx += b"0"
    try:
        return bytes.fromhex(hx.decode("ascii"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise PdfSyntaxError(f"bad ASCIIHex stream: {exc}") from exc


def _apply_filter(name: str, data: bytes) -> bytes:
    if name in ("FlateDecode", "Fl"):
        try:
            return zlib.decompress(data)
        except zlib.error as exc:
            raise PdfSyntaxError(f"bad Flate stream: {exc}") from exc
    if name in ("ASCII85Decode", "A85"):
        return _decode_a85(data)
    if name in ("ASCIIHexDecode", "AHx"):
        return _decode_ahx(data)
    raise PdfSyntaxError(f"unsupported stream filter /{name}")


# ---------------------------------------------------------------------------
# WinAnsi text decoding

_WINANSI_HIGH = {
    0x80: "€",
    0x82: "‚",
    0x83: "ƒ",
    0x84: "„",
    0x85: "…",
    0x86: "†",
    0x87: "‡",
    0x88: "ˆ",
    0x89: "‰",
    0x8A: "Š",
    0x8B: "‹",
    0x8C: "Œ",
    0x8E: "Ž",
    0x91: "‘",
    0x92: "’",
    0x93: "“",
    0x94: "”",
    0x95: "•",
    0x96: "–",
    0x97: "—",
    0x98: "˜",
    0x99: "™",
    0x9A: "š",
    0x9B: "›",
    0x9C: "œ",
    0x9E: "ž",
    0x9F: "Ÿ",
}


def decode_winansi(raw: bytes) -> str:
    """WinAnsi bytes to text; outside 0x80-0x9F the encoding matches latin-1."""
    return "".join(_WINANSI_HIGH.get(b, chr(b)) for b in raw)


# ---------------------------------------------------------------------------
# Document structure


class PdfDocument:
    """A parsed PDF: indirect objects, trailer dictionaries, and page access.

    Objects are found by scanning the whole file for `N G obj`, so broken or
    absent cross-reference tables do not matter. Objects packed into object
    streams are expanded afterwards (skipped when the file is encrypted,
    since their payload cannot be decoded).
    """

    def __init__(self, data: bytes):
        if b"%PDF-" not in data[:1024]:
            raise PdfSyntaxError("missing %PDF header")
        self._data = data
        self.objects: dict[int, Any] = {}
        self._stream_spans: list[tuple[int, int]] = []
        self.trailers: list[dict[str, Any]] = []
        self._scan()
        self._find_trailers()
        if not self.is_encrypted:
            self._expand_object_streams()

    # -- construction

    def _scan(self) -> None:
        data = self._data
        n = len(data)
        pos = 0
        while True:
            m = _OBJ_RE.search(data, pos)
            if not m:
                break
            num = int(m.group(1))
            try:
                value, vend = parse_value(data, m.end())
            except PdfSyntaxError:
                pos = m.end()
                continue
            entry: Any = value
            after = _skip_ws(data, vend)
            if isinstance(value, dict) and data[after : after + 6] == b"stream":
                dstart = after + 6
                if data[dstart : dstart + 2] == b"\r\n":
                    dstart += 2
                elif data[dstart : dstart + 1] in (b"\n", b"\r"):
                    dstart += 1
                raw, dend = self._stream_extent(value, dstart)
                entry = StreamObject(value, raw)
                self._stream_spans.append((dstart, dend))
                nxt = data.find(b"endobj", dend)
                pos = nxt + 6 if nxt >= 0 else dend
            else:
                nxt = data.find(b"endobj", vend)
                pos = nxt + 6 if nxt >= 0 else vend
            # later definitions win, matching incremental-update semantics
            self.objects[num] = entry

    def _stream_extent(self, dictionary: dict[str, Any], dstart: int) -> tuple[bytes, int]:
        data = self._data
        n = len(data)
        length = dictionary.get("Length")
        if isinstance(length, int) and 0 <= length and dstart + length <= n:
            tail = data[dstart + length : dstart + length + 16].lstrip(b"\r\n\x00\t ")
            if tail.startswith(b"endstream"):
                return data[dstart : dstart + length], dstart + length
        # /Length missing, indirect, or wrong: trust the endstream keyword,
        # trimming the single EOL the format puts before it
        e = data.find(b"endstream", dstart)
        if e < 0:
            raise PdfSyntaxError("unterminated stream object")
        raw = data[dstart:e]
        if raw.endswith(b"\r\n"):
            raw = raw[:-2]
        elif raw.endswith(b"\n") or raw.endswith(b"\r"):
            raw = raw[:-1]
        return raw, e

    def _find_trailers(self) -> None:
        data = self._data
        for m in _TRAILER_RE.finditer(data):
            if any(s <= m.start() < e for s, e in self._stream_spans):
                continue
            try:
                value, _ = parse_value(data, m.end())
            except PdfSyntaxError:
                continue
            if isinstance(value, dict):
                self.trailers.append(value)
        # cross-reference streams carry trailer keys in their stream dict
        for obj in self.objects.values():
            if isinstance(obj, StreamObject) and obj.dictionary.get("Type") == "XRef":
                self.trailers.append(obj.dictionary)

    def _expand_object_streams(self) -> None:
        for obj in list(self.objects.values()):
            if not isinstance(obj, StreamObject) or obj.dictionary.get("Type") != "ObjStm":
                continue
            try:
                payload = self.decode_stream(obj)
                count = int(self.resolve(obj.dictionary.get("N", 0)))
                first = int(self.resolve(obj.dictionary.get("First", 0)))
            except (PdfSyntaxError, TypeError, ValueError):
                continue
            header = payload[:first].split()
            for i in range(0, min(len(header) - 1, 2 * count - 1), 2):
                try:
                    num = int(header[i])
                    offset = int(header[i + 1])
                    value, _ = parse_value(payload, first + offset)
                except (PdfSyntaxError, ValueError):
                    continue
                # regular objects win over packed ones
                self.objects.setdefault(num, value)

    # -- access

    def resolve(self, value: Any) -> Any:
        hops = 0
        while isinstance(value, Ref):
            if hops > 64:
                raise PdfSyntaxError("reference chain too deep")
            value = self.objects.get(value.num)
            hops += 1
        return value

    @property
    def is_encrypted(self) -> bool:
        return any("Encrypt" in t for t in self.trailers)

    @property
    def catalog(self) -> dict[str, Any]:
        for trailer in reversed(self.trailers):
            root = trailer.get("Root")
            if root is None:
                continue
            candidate = self.resolve(root)
            if isinstance(candidate, dict):
                return candidate
        # no usable trailer: fall back to the first catalog in file order
        for obj in self.objects.values():
            value = obj.dictionary if isinstance(obj, StreamObject) else obj
            if isinstance(value, dict) and value.get("Type") == "Catalog":
                return value
        raise PdfSyntaxError("no document catalog")

    def pages(self) -> list[dict[str, Any]]:
        """Page dictionaries in document order."""
        out: list[dict[str, Any]] = []
        seen: set[int] = set()

        def walk(node: Any) -> None:
            node = self.resolve(node)
            if not isinstance(node, dict) or id(node) in seen:
                return
            seen.add(id(node))
            if node.get("Type") == "Page":
                out.append(node)
                return
            kids = self.resolve(node.get("Kids"))
            if isinstance(kids, list):
                for kid in kids:
                    walk(kid)

        try:
            walk(self.catalog.get("Pages"))
        except PdfSyntaxError:
            pass
        if not out:  # damaged page tree: take page objects in file order
            for obj in self.objects.values():
                value = obj.dictionary if isinstance(obj, StreamObject) else obj
                if isinstance(value, dict) and value.get("Type") == "Page":
                    out.append(value)
        return out

    def decode_stream(self, stream: StreamObject) -> bytes:
        filters = self.resolve(stream.dictionary.get("Filter"))
        if filters is None:
            return stream.raw
        if not isinstance(filters, list):
            filters = [filters]
        parms = self.resolve(stream.dictionary.get("DecodeParms"))
        if not isinstance(parms, list):
            parms = [parms] * len(filters)
        data = stream.raw
        for i, name in enumerate(filters):
            parm = self.resolve(parms[i]) if i < len(parms) else None
            if isinstance(parm, dict):
                predictor = self.resolve(parm.get("Predictor", 1))
                if predictor not in (None, 1):
                    raise PdfSyntaxError("predictor-coded streams are not supported")
            data = _apply_filter(str(self.resolve(name)), data)
        return data

    def page_content(self, page: dict[str, Any]) -> bytes:
        contents = self.resolve(page.get("Contents"))
        if contents is None:
            return b""
        parts = contents if isinstance(contents, list) else [contents]
        decoded: list[bytes] = []
        for part in parts:
            part = self.resolve(part)
            if isinstance(part, StreamObject):
                decoded.append(self.decode_stream(part))
        return b"\n".join(decoded)


# ---------------------------------------------------------------------------
# Content-stream interpretation


def _content_tokens(content: bytes) -> Iterator[Any]:
    pos = 0
    n = len(content)
    while True:
        pos = _skip_ws(content, pos)
        if pos >= n:
            return
        c = content[pos]
        if c == 0x2F:
            value, pos = _parse_name(content, pos)
            yield value
            continue
        if c == 0x28:
            value, pos = _parse_literal_string(content, pos)
            yield value
            continue
        if c == 0x3C:
            if content[pos + 1 : pos + 2] == b"<":
                value, pos = _parse_dict(content, pos)
            else:
                value, pos = _parse_hex_string(content, pos)
            yield value
            continue
        if c == 0x5B:
            value, pos = _parse_array(content, pos)
            yield value
            continue
        if c in b")]>}{":  # stray delimiter: skip rather than fail the page
            pos += 1
            continue
        token, pos = _read_token(content, pos)
        if not token:
            pos += 1
            continue
        if _NUMBER_RE.fullmatch(token):
            yield _parse_number(token)
            continue
        if token == b"true":
            yield True
            continue
        if token == b"false":
            yield False
            continue
        if token == b"null":
            yield None
            continue
        if token == b"BI":  # inline image: skip to a whitespace-preceded EI
            id_at = content.find(b"ID", pos)
            if id_at < 0:
                return
            e = content.find(b"EI", id_at + 3)
            while e > 0 and content[e - 1] not in _WHITESPACE:
                e = content.find(b"EI", e + 2)
            if e < 0:
                return
            pos = e + 2
            continue
        yield _Op(token.decode("latin-1"))


def _mat_mul(a: tuple[float, ...], b: tuple[float, ...]) -> tuple[float, ...]:
    """Compose 2x3 transforms: apply `a`, then `b`."""
    return (
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
        a[4] * b[0] + a[5] * b[2] + b[4],
        a[4] * b[1] + a[5] * b[3] + b[5],
    )


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def text_runs(content: bytes) -> list[TextRun]:
    """Execute a page's content stream and collect shown text with positions."""
    runs: list[TextRun] = []
    ctm = _IDENTITY
    saved: list[tuple[float, ...]] = []
    tm = _IDENTITY  # text matrix
    tlm = _IDENTITY  # text line matrix
    leading = 0.0
    operands: list[Any] = []

    def nums(k: int) -> list[float]:
        vals = [float(v) for v in operands if _is_number(v)][-k:]
        while len(vals) < k:
            vals.insert(0, 0.0)
        return vals

    def show(text: str) -> None:
        if not text:
            return
        trm = _mat_mul(tm, ctm)
        runs.append(TextRun(trm[4], trm[5], text))

    def show_operand() -> None:
        if operands and isinstance(operands[-1], bytes):
            show(decode_winansi(operands[-1]))

    def next_line(tx: float, ty: float) -> None:
        nonlocal tm, tlm
        tlm = _mat_mul((1.0, 0.0, 0.0, 1.0, tx, ty), tlm)
        tm = tlm

    for tok in _content_tokens(content):
        if not isinstance(tok, _Op):
            operands.append(tok)
            continue
        op = str(tok)
        if op == "q":
            saved.append(ctm)
        elif op == "Q":
            ctm = saved.pop() if saved else _IDENTITY
        elif op == "cm":
            ctm = _mat_mul(tuple(nums(6)), ctm)
        elif op == "BT":
            tm = tlm = _IDENTITY
        elif op == "Tm":
            tm = tlm = tuple(nums(6))
        elif op == "Td":
            tx, ty = nums(2)
            next_line(tx, ty)
        elif op == "TD":
            tx, ty = nums(2)
            leading = -ty
            next_line(tx, ty)
        elif op == "TL":
            (leading,) = nums(1)
        elif op == "T*":
            next_line(0.0, -leading)
        elif op == "Tj":
            show_operand()
        elif op in ("'", '"'):
            next_line(0.0, -leading)
            show_operand()
        elif op == "TJ":
            if operands and isinstance(operands[-1], list):
                text = ""
                for item in operands[-1]:
                    if isinstance(item, bytes):
                        text += decode_winansi(item)
                    elif _is_number(item) and item <= TJ_SPACE_KERN:
                        if text and not text.endswith(" "):
                            text += " "
                show(text)
        operands.clear()
    return runs
