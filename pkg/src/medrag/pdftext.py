"""Minimal text-layer PDF extraction.

No full-featured PDF library is required at runtime: this module pulls
text out of simple, well-formed PDFs whose content streams are stored
raw or behind FlateDecode / ASCII85Decode / ASCIIHexDecode filters and
whose text uses standard simple encodings. That covers the output of
common report generators. Scanned pages, CID fonts, and exotic filters
are out of reach; plug a richer ``PdfExtractor`` into the ingestion
functions for those.
"""

from __future__ import annotations

import base64
import binascii
import re
import zlib

from .errors import ExtractionFailed

_STREAM_RE = re.compile(rb"stream\r?\n")
_FILTER_RE = re.compile(rb"/Filter\s*(\[[^\]]*\]|/\w+)")
# operators that show text: Tj, ', " and TJ arrays
_SHOW_OPS = (b"Tj", b"TJ", b"'", b'"')


def extract_pdf_pages(raw: bytes) -> list[str]:
    """Extract page texts from PDF bytes, one string per content stream.

    Raises ExtractionFailed when the bytes are not a PDF or no text
    could be recovered from any stream.
    """
    if not raw.startswith(b"%PDF"):
        raise ExtractionFailed("not a PDF (missing %PDF header)")
    pages: list[str] = []
    for dict_bytes, stream in _iter_streams(raw):
        data = _decode_stream(dict_bytes, stream)
        if data is None:
            continue
        if not any(op in data for op in _SHOW_OPS):
            continue
        text = _text_from_content(data)
        if text:
            pages.append(text)
    if not pages:
        raise ExtractionFailed("no extractable text layer found")
    return pages


def _iter_streams(raw: bytes):
    """Yield (object dict bytes, stream bytes) pairs in file order."""
    for match in _STREAM_RE.finditer(raw):
        start = match.end()
        end = raw.find(b"endstream", start)
        if end == -1:
            continue
        dict_start = raw.rfind(b"<<", 0, match.start())
        dict_bytes = raw[dict_start : match.start()] if dict_start != -1 else b""
        yield dict_bytes, raw[start:end].rstrip(b"\r\n")


def _decode_stream(dict_bytes: bytes, stream: bytes) -> bytes | None:
    """Apply the declared filter chain; None when a filter is unsupported."""
    m = _FILTER_RE.search(dict_bytes)
    if m is None:
        return stream
    spec = m.group(1)
    filters = re.findall(rb"/(\w+)", spec)
    data = stream
    for name in filters:
        try:
            if name == b"FlateDecode" or name == b"Fl":
                data = zlib.decompress(data)
            elif name == b"ASCII85Decode" or name == b"A85":
                data = base64.a85decode(data, adobe=True, ignorechars=b" \t\r\n")
            elif name == b"ASCIIHexDecode" or name == b"AHx":
                data = binascii.unhexlify(re.sub(rb"[^0-9A-Fa-f]", b"", data.rstrip(b">")))
            else:
                return None
        except Exception:
            return None
    return data


def _text_from_content(data: bytes) -> str:
    """Collect the strings shown by Tj/TJ/quote operators, in order."""
    lines: list[str] = []
    buffer: list[str] = []
    i = 0
    n = len(data)
    while i < n:
        ch = data[i : i + 1]
        if ch == b"(":
            literal, i = _read_literal(data, i)
            buffer.append(literal)
            continue
        if ch == b"<" and data[i : i + 2] != b"<<":
            hexed, i = _read_hex(data, i)
            buffer.append(hexed)
            continue
        if ch == b"<":
            i += 2
            continue
        if ch.isalpha() or ch in (b"'", b'"'):
            j = i
            while j < n and (data[j : j + 1].isalpha() or data[j : j + 1] in (b"'", b'"', b"*")):
                j += 1
            op = data[i:j]
            if op in (b"Tj", b"TJ", b"'", b'"') and buffer:
                lines.append("".join(buffer))
                buffer = []
            i = j if j > i else i + 1
            continue
        i += 1
    if buffer:
        lines.append("".join(buffer))
    return "\n".join(line for line in lines if line.strip())


_ESCAPES = {
    b"n": "\n",
    b"r": "\r",
    b"t": "\t",
    b"b": "\b",
    b"f": "\f",
    b"(": "(",
    b")": ")",
    b"\\": "\\",
}


def _read_literal(data: bytes, start: int) -> tuple[str, int]:
    """Parse a (...) literal string starting at ``start``; returns (text, next_index)."""
    out = bytearray()
    depth = 1
    i = start + 1
    n = len(data)
    while i < n and depth > 0:
        b = data[i : i + 1]
        if b == b"\\":
            nxt = data[i + 1 : i + 2]
            if nxt in _ESCAPES:
                out.extend(_ESCAPES[nxt].encode("latin-1"))
                i += 2
            elif nxt.isdigit():
                j = i + 1
                while j < min(i + 4, n) and data[j : j + 1].isdigit():
                    j += 1
                out.append(int(data[i + 1 : j], 8) & 0xFF)
                i = j
            else:
                i += 2  # line continuation or unknown escape
        elif b == b"(":
            depth += 1
            out.extend(b)
            i += 1
        elif b == b")":
            depth -= 1
            if depth > 0:
                out.extend(b)
            i += 1
        else:
            out.extend(b)
            i += 1
    return _decode_pdf_string(bytes(out)), i


def _read_hex(data: bytes, start: int) -> tuple[str, int]:
    """Parse a <...> hex string starting at ``start``."""
    end = data.find(b">", start)
    if end == -1:
        return "", len(data)
    hexdigits = re.sub(rb"[^0-9A-Fa-f]", b"", data[start + 1 : end])
    if len(hexdigits) % 2:
        hexdigits += b"0"
    return _decode_pdf_string(binascii.unhexlify(hexdigits)), end + 1


def _decode_pdf_string(raw: bytes) -> str:
    if raw.startswith(b"\xfe\xff"):
        return raw[2:].decode("utf-16-be", errors="replace")
    return raw.decode("latin-1", errors="replace")
