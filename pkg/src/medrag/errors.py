"""Exception hierarchy shared by all medrag modules."""

from __future__ import annotations


class MedragError(Exception):
    """Base class for every error raised by this package."""


# --- corpus ingestion ---------------------------------------------------


class PathNotFound(MedragError):
    """The corpus directory does not exist or is not a directory."""


class ExtractionFailed(MedragError):
    """A file's bytes could not be decoded into text."""

    def __init__(self, message: str, source: str | None = None):
        super().__init__(message)
        self.source = source


class EmptyCorpus(MedragError):
    """Zero documents loaded from the corpus directory."""


# --- embedding ----------------------------------------------------------


class EmptyText(MedragError):
    """Text is empty after trimming; there is nothing to embed.

    ``index`` identifies the failing element of a batch, if any.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DimensionMismatch(MedragError):
    """A vector's dimension does not match what the consumer expects."""


# --- vector store -------------------------------------------------------


class EmbedderMismatch(MedragError):
    """Records produced by a different embedder than the collection's."""


class CorruptIndex(MedragError):
    """Checksum or record-count mismatch while loading a saved collection."""


class VersionUnsupported(MedragError):
    """The saved collection's format version is not supported."""


# --- prompt pipeline ----------------------------------------------------


class EmptyQuestion(MedragError):
    """The question is empty after trimming."""


class PipelineError(MedragError):
    """A pipeline stage failed while answering a question.

    ``stage`` is one of "embed", "search", "prompt", "generation";
    ``partial_text`` carries any answer tokens delivered before the failure.
    """

    def __init__(self, stage: str, message: str, partial_text: str = ""):
        super().__init__(message)
        self.stage = stage
        self.partial_text = partial_text


# --- generation backends ------------------------------------------------


class BackendUnavailable(MedragError):
    """The generation or embedding server could not be reached."""


class BackendError(MedragError):
    """The backend answered with a non-success status."""

    def __init__(self, status: int, body: str):
        super().__init__(f"backend returned status {status}: {body[:200]}")
        self.status = status
        self.body = body


class StreamInterrupted(MedragError):
    """The token stream's connection dropped before its terminal event."""

    def __init__(self, message: str, partial_text: str = ""):
        super().__init__(message)
        self.partial_text = partial_text
