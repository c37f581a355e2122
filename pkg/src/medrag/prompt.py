"""Prompt assembly and the question-answering orchestrator.

``build_prompt`` turns (question, retrieved hits) into the exact string
the generation backend receives: the safety system prompt, source-tagged
context passages packed greedily in score order under a character
budget, and the question last. ``stream_answer`` runs the full path --
embed, search, build, generate -- and yields a meta event followed by
token events and one terminal done/error event.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .errors import EmptyQuestion, MedragError, PipelineError
from .generation import GenerationConfig
from .store import SearchHit

# Safety instructions prepended to every prompt. Both paragraphs are
# load-bearing: the first constrains tone, the second forbids invented
# answers.
DEFAULT_SYSTEM_PROMPT = (
    "You are a helpful, respectful, and honest assistant. Always answer as "
    "helpfully as possible, while being safe. Your answers should not include "
    "any harmful, unethical, racist, sexist, toxic, dangerous, or illegal "
    "content. Please ensure that your responses are socially unbiased and "
    "positive in nature.\n\n"
    "If a question does not make any sense, or is not factually coherent, "
    "explain why instead of answering something not correct. If you don't "
    "know the answer to a question, please don't share false information."
)

TEMPLATE_IDS = ("llama2_chat", "plain")


@dataclass(frozen=True)
class SystemPrompt:
    text: str = DEFAULT_SYSTEM_PROMPT

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("system prompt must be non-empty")


def default_system_prompt() -> SystemPrompt:
    return SystemPrompt()


@dataclass(frozen=True)
class PipelineConfig:
    top_k: int = 5
    context_char_budget: int = 6000
    prompt_template_id: str = "llama2_chat"

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if self.context_char_budget < 1:
            raise ValueError("context_char_budget must be positive")
        if self.prompt_template_id not in TEMPLATE_IDS:
            raise ValueError(f"unknown template {self.prompt_template_id!r}")


@dataclass(frozen=True)
class PromptBundle:
    rendered: str
    question: str
    included_chunk_ids: tuple[str, ...]
    context_char_count: int
    truncated: bool


def build_prompt(
    question: str,
    hits: list[SearchHit],
    system: SystemPrompt | None = None,
    config: PipelineConfig | None = None,
) -> PromptBundle:
    """Render the final prompt from a question and retrieved hits.

    Hit texts are packed in descending score order (ties by chunk_id)
    until the next passage would exceed the context budget; dropping any
    hit sets ``truncated``. Each passage is prefixed with its source tag
    ``[chunk_id]`` so answers can cite their provenance.
    """
    system = system or SystemPrompt()
    config = config or PipelineConfig()
    question = question.strip()
    if not question:
        raise EmptyQuestion("question is empty")

    ordered = sorted(hits, key=lambda h: (-h.score, h.chunk_id))
    included: list[SearchHit] = []
    used = 0
    truncated = False
    for hit in ordered:
        if used + len(hit.text) > config.context_char_budget:
            truncated = True
            break
        included.append(hit)
        used += len(hit.text)

    passages = "\n\n".join(f"[{hit.chunk_id}] {hit.text}" for hit in included)
    if config.prompt_template_id == "llama2_chat":
        rendered = (
            f"<s>[INST] <<SYS>>\n{system.text}\n<</SYS>>\n\n"
            f"Use the following context to answer.\n"
            f"Context:\n{passages}\n\n"
            f"Question: {question} [/INST]"
        )
    else:
        rendered = f"{system.text}\n\n{passages}\n\nQuestion: {question}"
    return PromptBundle(
        rendered=rendered,
        question=question,
        included_chunk_ids=tuple(hit.chunk_id for hit in included),
        context_char_count=used,
        truncated=truncated,
    )


@dataclass(frozen=True)
class Citation:
    chunk_id: str
    doc_id: str
    score: float
    char_start: int
    char_end: int


@dataclass(frozen=True)
class AnswerEvent:
    """One event of the answering stream: meta (token)* (done | error)."""

    kind: str  # "meta" | "token" | "done" | "error"
    citations: tuple[Citation, ...] = ()
    truncated: bool = False
    text: str = ""
    finish_reason: str | None = None
    stage: str | None = None
    message: str | None = None
    error_code: str | None = None  # snake_case exception name, e.g. "backend_unavailable"
    partial_text: str | None = None
    timing_ms: dict[str, float] | None = None


@dataclass
class Answer:
    """Full answer after the stream completes."""

    text: str
    citations: list[Citation]
    truncated: bool
    finish_reason: str
    timing_ms: dict[str, float] = field(default_factory=dict)


def answer_payload(answer: Answer) -> dict:
    """Serialize an Answer into the wire payload shared by API and CLI."""
    return {
        "answer": answer.text,
        "citations": [
            {
                "chunk_id": c.chunk_id,
                "doc_id": c.doc_id,
                "score": c.score,
                "char_start": c.char_start,
                "char_end": c.char_end,
            }
            for c in answer.citations
        ],
        "truncated": answer.truncated,
        "timing_ms": {
            "embed": answer.timing_ms.get("embed", 0.0),
            "search": answer.timing_ms.get("search", 0.0),
            "generate": answer.timing_ms.get("generate", 0.0),
        },
    }


def _snake_case(name: str) -> str:
    return "".join(("_" + c.lower()) if c.isupper() else c for c in name).lstrip("_")


def _citation_for(hit: SearchHit) -> Citation:
    # chunk ids are "{doc_id}#{seq}" by construction
    doc_id = hit.chunk_id.rsplit("#", 1)[0]
    return Citation(
        chunk_id=hit.chunk_id,
        doc_id=doc_id,
        score=hit.score,
        char_start=int(hit.metadata.get("char_start", 0)),
        char_end=int(hit.metadata.get("char_end", 0)),
    )


def stream_answer(
    question: str,
    collection,
    embedder,
    backend,
    config: PipelineConfig | None = None,
    system: SystemPrompt | None = None,
    gen_config: GenerationConfig | None = None,
) -> Iterator[AnswerEvent]:
    """Answer a question as an event stream: meta, tokens, then done/error.

    Stage failures become a terminal error event tagged with the stage
    name and carrying any partial answer text already streamed.
    """
    config = config or PipelineConfig()
    timing: dict[str, float] = {}
    try:
        stage = "embed"
        t0 = time.perf_counter()
        query_vector = embedder.embed(question)
        timing["embed"] = (time.perf_counter() - t0) * 1000.0

        stage = "search"
        t0 = time.perf_counter()
        hits = collection.search(query_vector, config.top_k) if len(collection) else []
        timing["search"] = (time.perf_counter() - t0) * 1000.0

        stage = "prompt"
        bundle = build_prompt(question, hits, system, config)
        by_id = {hit.chunk_id: hit for hit in hits}
        citations = tuple(_citation_for(by_id[cid]) for cid in bundle.included_chunk_ids)
    except MedragError as exc:
        yield AnswerEvent(
            kind="error",
            stage=stage,
            message=str(exc),
            error_code=_snake_case(type(exc).__name__),
            partial_text="",
        )
        return

    yield AnswerEvent(kind="meta", citations=citations, truncated=bundle.truncated)

    parts: list[str] = []
    t0 = time.perf_counter()
    try:
        for event in backend.generate_stream(bundle.rendered, gen_config):
            if event.kind == "token":
                parts.append(event.text)
                yield AnswerEvent(kind="token", text=event.text)
            elif event.kind == "done":
                timing["generate"] = (time.perf_counter() - t0) * 1000.0
                yield AnswerEvent(
                    kind="done",
                    finish_reason=event.finish_reason or "stop",
                    timing_ms=dict(timing),
                )
                return
            elif event.kind == "error":
                yield AnswerEvent(
                    kind="error",
                    stage="generation",
                    message=event.message or "backend error",
                    partial_text="".join(parts),
                )
                return
        yield AnswerEvent(
            kind="error",
            stage="generation",
            message="backend stream ended without a terminal event",
            partial_text="".join(parts),
        )
    except MedragError as exc:
        partial = getattr(exc, "partial_text", "") or "".join(parts)
        yield AnswerEvent(
            kind="error",
            stage="generation",
            message=str(exc),
            error_code=_snake_case(type(exc).__name__),
            partial_text=partial,
        )


def answer_question(
    question: str,
    collection,
    embedder,
    backend,
    config: PipelineConfig | None = None,
    system: SystemPrompt | None = None,
    gen_config: GenerationConfig | None = None,
    on_token: Callable[[str], None] | None = None,
) -> Answer:
    """Run the full pipeline and return the collected Answer.

    Forwards each token fragment to ``on_token`` as it arrives. Stage
    failures raise PipelineError tagged with the stage.
    """
    citations: list[Citation] = []
    truncated = False
    parts: list[str] = []
    for event in stream_answer(
        question, collection, embedder, backend, config, system, gen_config
    ):
        if event.kind == "meta":
            citations = list(event.citations)
            truncated = event.truncated
        elif event.kind == "token":
            parts.append(event.text)
            if on_token is not None:
                on_token(event.text)
        elif event.kind == "done":
            return Answer(
                text="".join(parts),
                citations=citations,
                truncated=truncated,
                finish_reason=event.finish_reason or "stop",
                timing_ms=event.timing_ms or {},
            )
        else:
            raise PipelineError(
                stage=event.stage or "generation",
                message=event.message or "pipeline error",
                partial_text=event.partial_text or "".join(parts),
            )
    raise PipelineError(stage="generation", message="stream produced no terminal event")
