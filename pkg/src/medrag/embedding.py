"""Text-to-vector embedders.

Two implementations share one contract: every emitted vector is float32,
has the dimension declared by the embedder's spec, and is L2-normalized
so the vector store can use plain dot products as cosine similarity.

``HashEmbedder`` (hash-v1) is fully deterministic and needs no network
or model weights; ``RemoteEmbedder`` talks to an HTTP embedding server.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from hashlib import blake2b

import httpx
import numpy as np

from .errors import BackendUnavailable, DimensionMismatch, EmptyText

DEFAULT_DIM = 384

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class EmbedderSpec:
    """Identifies provider, model, and output dimension."""

    embedder_id: str
    dim: int


def l2_normalize(values: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm, computed in float64, emitted as float32."""
    acc = np.asarray(values, dtype=np.float64)
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return (acc / norm).astype(np.float32)


@lru_cache(maxsize=1 << 17)
def _gram_bucket(gram: str) -> tuple[int, float]:
    """Map one n-gram to (64-bit hash, sign) with a fixed seedless hash."""
    digest = blake2b(gram.encode("utf-8"), digest_size=8).digest()
    h = int.from_bytes(digest, "little")
    return h, 1.0 if (h >> 63) & 1 else -1.0


class HashEmbedder:
    """Deterministic character-trigram hashing embedder (hash-v1).

    Lowercases the text, hashes every character trigram, adds +-1 into
    the bucket ``hash % dim``, and L2-normalizes the accumulator. Texts
    shorter than three characters contribute themselves as one gram.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.spec = EmbedderSpec(embedder_id=f"hash-v1/{dim}", dim=dim)

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        dim = self.spec.dim
        lowered = text.lower()
        if len(lowered) >= 3:
            grams = (lowered[i : i + 3] for i in range(len(lowered) - 2))
        else:
            grams = iter([lowered])
        acc = np.zeros(dim, dtype=np.float64)
        for gram in grams:
            h, sign = _gram_bucket(gram)
            acc[h % dim] += sign
        if not acc.any():
            # opposite-signed grams cancelled out; fall back to one full-text bucket
            h, _ = _gram_bucket(lowered)
            acc[h % dim] = 1.0
        return l2_normalize(acc)

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        out = []
        for i, text in enumerate(texts):
            try:
                out.append(self.embed(text))
            except EmptyText as exc:
                raise EmptyText(f"empty text at index {i}", index=i) from exc
        return out


class RemoteEmbedder:
    """Client for an HTTP embedding server speaking the /v1/embeddings protocol.

    Request: ``POST {base_url}/v1/embeddings`` with
    ``{"model": ..., "input": [...]}``; response carries
    ``{"data": [{"index": i, "embedding": [...]}, ...]}``.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int = DEFAULT_DIM,
        timeout: float = 30.0,
        retries: int = 1,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout
        self.retries = retries
        self.spec = EmbedderSpec(embedder_id=f"remote/{model}/{dim}", dim=dim)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        for i, text in enumerate(texts):
            if not text.strip():
                raise EmptyText(f"empty text at index {i}", index=i)
        if not texts:
            return []
        payload = {"model": self.model, "input": list(texts)}
        url = f"{self.base_url}/v1/embeddings"
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = httpx.post(url, json=payload, timeout=self.timeout)
                break
            except httpx.HTTPError as exc:
                last_exc = exc
        else:
            raise BackendUnavailable(f"embedding server unreachable at {url}: {last_exc}")
        if response.status_code != 200:
            raise BackendUnavailable(
                f"embedding server returned {response.status_code}: {response.text[:200]}"
            )
        data = sorted(response.json()["data"], key=lambda item: item["index"])
        if len(data) != len(texts):
            raise DimensionMismatch(
                f"server returned {len(data)} embeddings for {len(texts)} inputs"
            )
        vectors = []
        for item in data:
            values = np.asarray(item["embedding"], dtype=np.float64)
            if values.shape != (self.spec.dim,):
                raise DimensionMismatch(
                    f"expected dim {self.spec.dim}, server returned {values.shape}"
                )
            vectors.append(l2_normalize(values))
        return vectors


def embedder_from_id(embedder_id: str, base_url: str | None = None):
    """Rebuild an embedder from its id, e.g. "hash-v1/384".

    Remote ids ("remote/{model}/{dim}") need a base URL, taken from the
    argument or the MEDRAG_BACKEND_URL environment variable.
    """
    parts = embedder_id.split("/")
    if parts[0] == "hash-v1" and len(parts) == 2:
        return HashEmbedder(dim=int(parts[1]))
    if parts[0] == "remote" and len(parts) >= 3:
        url = base_url or os.environ.get("MEDRAG_BACKEND_URL")
        if not url:
            raise ValueError(f"remote embedder {embedder_id!r} needs a base URL")
        return RemoteEmbedder(url, model="/".join(parts[1:-1]), dim=int(parts[-1]))
    raise ValueError(f"unknown embedder id: {embedder_id!r}")
