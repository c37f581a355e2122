"""Exact top-k cosine similarity store with file persistence.

A Collection holds one vector per chunk plus its text and metadata.
Search is an exact full scan: all stored vectors are unit-normalized,
so the k largest dot products are the k most cosine-similar records.
Ties are broken by ascending chunk_id to keep results deterministic.

On disk a collection is a directory ``{name}/`` holding a JSON
``manifest`` (format version, header fields, record count, checksum)
and a ``records`` file with one JSON record per line; vectors travel
as base64-encoded little-endian float32, so round-trips are bit-exact.
"""

from __future__ import annotations

import base64
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from hashlib import blake2b
from pathlib import Path

import numpy as np

from .errors import CorruptIndex, DimensionMismatch, EmbedderMismatch, VersionUnsupported

FORMAT_VERSION = 1
MANIFEST_FILE = "manifest"
RECORDS_FILE = "records"


@dataclass
class VectorRecord:
    """One stored chunk: embedding, text, and provenance metadata."""

    chunk_id: str
    doc_id: str
    vector: np.ndarray
    text: str
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    score: float
    text: str
    metadata: dict[str, str]


def _checksum(data: bytes) -> str:
    """64-bit checksum of the records file, hex encoded."""
    return blake2b(data, digest_size=8).hexdigest()


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Collection:
    """Named set of VectorRecords sharing one embedder and dimension.

    Concurrency: reads and writes are serialized by an internal lock;
    a search never observes a partially applied upsert, and save writes
    a consistent snapshot.
    """

    def __init__(self, name: str, embedder_id: str, dim: int, created_at: str | None = None):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.name = name
        self.embedder_id = embedder_id
        self.dim = dim
        self.created_at = created_at or _now_iso()
        self._records: dict[str, VectorRecord] = {}
        self._lock = threading.Lock()
        self._matrix: np.ndarray | None = None  # float64 cache for scoring
        self._ids: list[str] | None = None

    def __len__(self) -> int:
        return len(self._records)

    def upsert(self, records: list[VectorRecord], *, embedder_id: str | None = None) -> int:
        """Insert or replace records by chunk_id; returns how many were applied.

        The whole batch is validated before any record lands, so a
        dimension error cannot leave the collection half-updated.
        """
        if embedder_id is not None and embedder_id != self.embedder_id:
            raise EmbedderMismatch(
                f"collection expects {self.embedder_id!r}, records came from {embedder_id!r}"
            )
        for record in records:
            vector = np.asarray(record.vector)
            if vector.shape != (self.dim,):
                raise DimensionMismatch(
                    f"record {record.chunk_id!r} has shape {vector.shape}, expected ({self.dim},)"
                )
        with self._lock:
            for record in records:
                record.vector = np.asarray(record.vector, dtype=np.float32)
                self._records[record.chunk_id] = record
            self._matrix = None
            self._ids = None
        return len(records)

    def get(self, chunk_id: str) -> VectorRecord | None:
        with self._lock:
            return self._records.get(chunk_id)

    def search(self, query: np.ndarray, top_k: int) -> list[SearchHit]:
        """Return the top_k most similar records, exactly.

        Hits are sorted by score descending, ties by ascending chunk_id.
        An empty collection yields an empty list.
        """
        if top_k < 1:
            raise ValueError("top_k must be at least 1")
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise DimensionMismatch(f"query has shape {q.shape}, expected ({self.dim},)")
        with self._lock:
            if not self._records:
                return []
            if self._matrix is None:
                self._ids = list(self._records.keys())
                self._matrix = np.stack(
                    [self._records[cid].vector for cid in self._ids]
                ).astype(np.float64)
            ids, matrix = self._ids, self._matrix
            records = self._records
            scores = matrix @ q
            order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))[:top_k]
            return [
                SearchHit(
                    chunk_id=ids[i],
                    score=float(scores[i]),
                    text=records[ids[i]].text,
                    metadata=dict(records[ids[i]].metadata),
                )
                for i in order
            ]

    # --- persistence ---------------------------------------------------

    def save(self, root: str | Path) -> Path:
        """Write ``{root}/{name}/manifest`` + ``records``; returns the directory."""
        target = Path(root) / self.name
        target.mkdir(parents=True, exist_ok=True)
        with self._lock:
            lines = []
            for record in self._records.values():
                vector32 = np.asarray(record.vector, dtype="<f4")
                lines.append(
                    json.dumps(
                        {
                            "chunk_id": record.chunk_id,
                            "doc_id": record.doc_id,
                            "metadata": record.metadata,
                            "text": record.text,
                            "vector": base64.b64encode(vector32.tobytes()).decode("ascii"),
                        },
                        ensure_ascii=False,
                    )
                )
            records_blob = ("\n".join(lines) + "\n" if lines else "").encode("utf-8")
            manifest = {
                "format_version": FORMAT_VERSION,
                "name": self.name,
                "embedder_id": self.embedder_id,
                "dim": self.dim,
                "record_count": len(self._records),
                "created_at": self.created_at,
                "checksum": _checksum(records_blob),
            }
        records_tmp = target / (RECORDS_FILE + ".tmp")
        records_tmp.write_bytes(records_blob)
        os.replace(records_tmp, target / RECORDS_FILE)
        manifest_tmp = target / (MANIFEST_FILE + ".tmp")
        manifest_tmp.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        os.replace(manifest_tmp, target / MANIFEST_FILE)
        return target

    @classmethod
    def load(cls, path: str | Path) -> "Collection":
        """Load a collection from its directory, verifying the checksum."""
        directory = Path(path)
        manifest_path = directory / MANIFEST_FILE
        records_path = directory / RECORDS_FILE
        if not manifest_path.is_file():
            raise CorruptIndex(f"manifest missing in {directory}")
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorruptIndex(f"manifest is not valid JSON: {exc}") from exc
        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise VersionUnsupported(f"format version {version!r} not supported")
        if not records_path.is_file():
            raise CorruptIndex(f"records file missing in {directory}")
        records_blob = records_path.read_bytes()
        if _checksum(records_blob) != manifest.get("checksum"):
            raise CorruptIndex("records checksum mismatch")
        collection = cls(
            name=manifest["name"],
            embedder_id=manifest["embedder_id"],
            dim=int(manifest["dim"]),
            created_at=manifest["created_at"],
        )
        for line_no, line in enumerate(records_blob.decode("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                vector = np.frombuffer(
                    base64.b64decode(obj["vector"]), dtype="<f4"
                ).astype(np.float32)
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise CorruptIndex(f"bad record on line {line_no}: {exc}") from exc
            if vector.shape != (collection.dim,):
                raise CorruptIndex(
                    f"record on line {line_no} has dim {vector.shape[0]}, expected {collection.dim}"
                )
            collection._records[obj["chunk_id"]] = VectorRecord(
                chunk_id=obj["chunk_id"],
                doc_id=obj["doc_id"],
                vector=vector,
                text=obj["text"],
                metadata=dict(obj["metadata"]),
            )
        if len(collection._records) != manifest.get("record_count"):
            raise CorruptIndex(
                f"record count mismatch: manifest says {manifest.get('record_count')}, "
                f"file has {len(collection._records)}"
            )
        return collection


def record_from_chunk(chunk, vector: np.ndarray, source_path: str) -> VectorRecord:
    """Build the store record for an ingested chunk."""
    return VectorRecord(
        chunk_id=chunk.chunk_id,
        doc_id=chunk.doc_id,
        vector=vector,
        text=chunk.text,
        metadata={
            "source_path": source_path,
            "seq": str(chunk.seq),
            "char_start": str(chunk.char_start),
            "char_end": str(chunk.char_end),
        },
    )
