"""Retrieval-augmented medical question answering.

Pipeline: load a document corpus, split it into overlapping chunks,
embed the chunks, index them for exact cosine-similarity search,
assemble a safety-constrained prompt from the best hits, and stream an
answer from a pluggable generation backend.
"""

from .embedding import DEFAULT_DIM, EmbedderSpec, HashEmbedder, RemoteEmbedder
from .errors import (
    BackendError,
    BackendUnavailable,
    CorruptIndex,
    DimensionMismatch,
    EmbedderMismatch,
    EmptyCorpus,
    EmptyQuestion,
    EmptyText,
    ExtractionFailed,
    MedragError,
    PathNotFound,
    PipelineError,
    StreamInterrupted,
    VersionUnsupported,
)
from .generation import (
    GenerationConfig,
    RemoteBackend,
    StubBackend,
    TokenEvent,
    count_approx_tokens,
    get_backend,
)
from .ingest import (
    Chunk,
    Document,
    Span,
    SplitterConfig,
    chunk_document,
    chunk_documents,
    dump_chunks,
    extract_text,
    load_directory,
    split_text,
)
from .prompt import (
    DEFAULT_SYSTEM_PROMPT,
    Answer,
    AnswerEvent,
    Citation,
    PipelineConfig,
    PromptBundle,
    SystemPrompt,
    answer_payload,
    answer_question,
    build_prompt,
    default_system_prompt,
    stream_answer,
)
from .store import Collection, SearchHit, VectorRecord, record_from_chunk

__version__ = "0.1.0"

__all__ = [
    "Answer",
    "AnswerEvent",
    "BackendError",
    "BackendUnavailable",
    "Chunk",
    "Citation",
    "Collection",
    "CorruptIndex",
    "DEFAULT_DIM",
    "DEFAULT_SYSTEM_PROMPT",
    "DimensionMismatch",
    "Document",
    "EmbedderMismatch",
    "EmbedderSpec",
    "EmptyCorpus",
    "EmptyQuestion",
    "EmptyText",
    "ExtractionFailed",
    "GenerationConfig",
    "HashEmbedder",
    "MedragError",
    "PathNotFound",
    "PipelineConfig",
    "PipelineError",
    "PromptBundle",
    "RemoteBackend",
    "RemoteEmbedder",
    "SearchHit",
    "Span",
    "SplitterConfig",
    "StreamInterrupted",
    "StubBackend",
    "SystemPrompt",
    "TokenEvent",
    "VectorRecord",
    "VersionUnsupported",
    "answer_payload",
    "answer_question",
    "build_prompt",
    "chunk_document",
    "chunk_documents",
    "count_approx_tokens",
    "default_system_prompt",
    "dump_chunks",
    "extract_text",
    "get_backend",
    "load_directory",
    "record_from_chunk",
    "split_text",
    "stream_answer",
]
