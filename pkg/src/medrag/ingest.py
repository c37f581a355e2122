"""Corpus loading, text extraction, and recursive character splitting.

Documents come from a directory of .txt/.md (and optionally .pdf) files.
Every chunk is a contiguous span of its document's text, so downstream
citations can always be traced back to exact character offsets.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Literal, NamedTuple

from .errors import EmptyCorpus, ExtractionFailed, PathNotFound

logger = logging.getLogger(__name__)

MediaKind = Literal["plain_text", "pdf_extracted"]

# extractor: raw PDF bytes -> list of page texts
PdfExtractor = Callable[[bytes], list[str]]

DEFAULT_CHUNK_SIZE = 1024
DEFAULT_CHUNK_OVERLAP = 64
DEFAULT_SEPARATORS = ("\n\n", "\n", " ", "")

TEXT_EXTENSIONS = {".txt", ".md"}
PDF_EXTENSION = ".pdf"


@dataclass(frozen=True)
class Document:
    """A loaded source file: identity, extracted text, source metadata."""

    doc_id: str
    text: str
    source_path: str
    byte_size: int
    media_kind: MediaKind


class Span(NamedTuple):
    """Half-open character interval into a document's text."""

    start: int
    end: int


@dataclass(frozen=True)
class Chunk:
    """A contiguous substring of a document, the unit of embedding."""

    chunk_id: str
    doc_id: str
    seq: int
    text: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class SplitterConfig:
    chunk_size: int = DEFAULT_CHUNK_SIZE
    chunk_overlap: int = DEFAULT_CHUNK_OVERLAP
    separators: tuple[str, ...] = DEFAULT_SEPARATORS

    def __post_init__(self):
        if self.chunk_size <= 0:
            raise ValueError("chunk_size must be positive")
        if self.chunk_overlap < 0:
            raise ValueError("chunk_overlap must be non-negative")
        if self.chunk_overlap >= self.chunk_size:
            raise ValueError("chunk_overlap must be smaller than chunk_size")
        if not self.separators or self.separators[-1] != "":
            raise ValueError("separators must end with the empty string")


def extract_text(
    raw_bytes: bytes,
    media_kind: MediaKind,
    pdf_extractor: PdfExtractor | None = None,
) -> str:
    """Decode raw file bytes to normalized Unicode text.

    CRLF/CR are normalized to LF. PDF page texts are joined with blank
    lines; decoding them is delegated to ``pdf_extractor``.
    """
    if media_kind == "plain_text":
        try:
            text = raw_bytes.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExtractionFailed(f"undecodable bytes: {exc}") from exc
    elif media_kind == "pdf_extracted":
        if pdf_extractor is None:
            raise ExtractionFailed("no PDF extractor configured")
        try:
            pages = pdf_extractor(raw_bytes)
        except ExtractionFailed:
            raise
        except Exception as exc:
            raise ExtractionFailed(f"PDF extraction failed: {exc}") from exc
        text = "\n\n".join(pages)
    else:
        raise ValueError(f"unknown media kind: {media_kind!r}")
    return text.replace("\r\n", "\n").replace("\r", "\n")


def load_directory(
    path: str | Path,
    config: SplitterConfig | None = None,
    *,
    pdf_extractor: PdfExtractor | None = None,
    on_skip: Callable[[str, str], None] | None = None,
) -> list[Document]:
    """Load every supported file under ``path`` as a Document.

    Returns documents in lexicographic doc_id (relative path) order.
    Unsupported files and per-file extraction failures are skipped with
    a notice; ``on_skip(doc_id, reason)`` observes them when given.
    ``config`` is validated up front so a bad splitter setup fails
    before any file is read.
    """
    root = Path(path)
    if not root.is_dir():
        raise PathNotFound(f"not a directory: {root}")
    if config is None:
        config = SplitterConfig()

    def skip(doc_id: str, reason: str) -> None:
        logger.info("skipping %s: %s", doc_id, reason)
        if on_skip is not None:
            on_skip(doc_id, reason)

    documents: list[Document] = []
    for file in sorted(p for p in root.rglob("*") if p.is_file()):
        doc_id = file.relative_to(root).as_posix()
        suffix = file.suffix.lower()
        if suffix in TEXT_EXTENSIONS:
            media: MediaKind = "plain_text"
        elif suffix == PDF_EXTENSION:
            if pdf_extractor is None:
                skip(doc_id, "no PDF extractor configured")
                continue
            media = "pdf_extracted"
        else:
            skip(doc_id, f"unsupported extension {suffix!r}")
            continue
        raw = file.read_bytes()
        try:
            text = extract_text(raw, media, pdf_extractor)
        except ExtractionFailed as exc:
            skip(doc_id, str(exc))
            continue
        documents.append(
            Document(
                doc_id=doc_id,
                text=text,
                source_path=str(file),
                byte_size=len(raw),
                media_kind=media,
            )
        )
    if not documents:
        raise EmptyCorpus(f"no supported documents in {root}")
    return documents


def split_text(text: str, config: SplitterConfig | None = None) -> list[Span]:
    """Split text into chunk spans of at most ``chunk_size`` characters.

    The text is split on the first separator that occurs in it; pieces
    still longer than the chunk size are re-split with the remaining
    separators (the empty separator means fixed character windows).
    Adjacent small pieces are then greedily merged in order, and
    consecutive chunks share up to ``chunk_overlap`` boundary characters.

    Every span is contiguous in the input and their union covers every
    non-whitespace character; whitespace-only spans are dropped. Empty
    or all-whitespace input yields an empty list.
    """
    if config is None:
        config = SplitterConfig()
    if not text.strip():
        return []
    pieces = _decompose(text, 0, len(text), list(config.separators), config.chunk_size)
    merged = _merge_pieces(pieces, config.chunk_size, config.chunk_overlap)
    return [s for s in merged if text[s.start : s.end].strip()]


def _decompose(
    text: str, start: int, end: int, separators: list[str], chunk_size: int
) -> list[Span]:
    """Recursively split [start, end) into pieces of at most chunk_size.

    Pieces tile the region: separators stay attached to the piece they
    terminate, so no character is lost between pieces.
    """
    if end - start <= chunk_size:
        return [Span(start, end)]
    for i, sep in enumerate(separators):
        if sep == "":
            return [Span(s, min(s + chunk_size, end)) for s in range(start, end, chunk_size)]
        pieces = _split_after(text, start, end, sep)
        if len(pieces) > 1:
            remaining = separators[i + 1 :]
            out: list[Span] = []
            for piece in pieces:
                if piece.end - piece.start <= chunk_size:
                    out.append(piece)
                else:
                    out.extend(_decompose(text, piece.start, piece.end, remaining, chunk_size))
            return out
    # unreachable while SplitterConfig guarantees a final "" separator
    return [Span(s, min(s + chunk_size, end)) for s in range(start, end, chunk_size)]


def _split_after(text: str, start: int, end: int, sep: str) -> list[Span]:
    """Cut [start, end) after each occurrence of ``sep``."""
    pieces: list[Span] = []
    pos = start
    while True:
        idx = text.find(sep, pos, end)
        if idx == -1:
            break
        cut = idx + len(sep)
        pieces.append(Span(pos, cut))
        pos = cut
    if pos < end:
        pieces.append(Span(pos, end))
    return pieces


def _merge_pieces(pieces: list[Span], chunk_size: int, chunk_overlap: int) -> list[Span]:
    """Greedily merge adjacent pieces into chunks of at most chunk_size.

    When a chunk closes, trailing pieces totalling at most chunk_overlap
    characters are kept to seed the next chunk.
    """
    chunks: list[Span] = []
    window: deque[Span] = deque()
    total = 0
    for piece in pieces:
        plen = piece.end - piece.start
        if window and total + plen > chunk_size:
            chunks.append(Span(window[0].start, window[-1].end))
            while window and (total > chunk_overlap or total + plen > chunk_size):
                dropped = window.popleft()
                total -= dropped.end - dropped.start
        window.append(piece)
        total += plen
    if window:
        chunks.append(Span(window[0].start, window[-1].end))
    return chunks


def chunk_document(doc: Document, config: SplitterConfig | None = None) -> list[Chunk]:
    """Split one document into Chunk records with stable ids."""
    spans = split_text(doc.text, config)
    return [
        Chunk(
            chunk_id=f"{doc.doc_id}#{seq}",
            doc_id=doc.doc_id,
            seq=seq,
            text=doc.text[span.start : span.end],
            char_start=span.start,
            char_end=span.end,
        )
        for seq, span in enumerate(spans)
    ]


def chunk_documents(
    docs: Iterable[Document], config: SplitterConfig | None = None
) -> list[Chunk]:
    """Split many documents, preserving document order."""
    chunks: list[Chunk] = []
    for doc in docs:
        chunks.extend(chunk_document(doc, config))
    return chunks


def dump_chunks(chunks: Iterable[Chunk], path: str | Path) -> int:
    """Write chunks to a JSONL debug file; returns the record count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(
                json.dumps(
                    {
                        "chunk_id": chunk.chunk_id,
                        "char_start": chunk.char_start,
                        "char_end": chunk.char_end,
                        "text": chunk.text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count
