"""HTTP face of the pipeline: ingestion, querying, streaming chat, health.

Endpoints:
  POST /api/ingest   {"path": dir} or multipart upload -> counts
  POST /api/query    QueryRequest -> AnswerPayload (full answer)
  POST /api/chat     QueryRequest -> server-sent events: meta (token)* (done|error)
  GET  /healthz      service, collection, and backend status

Every 4xx/5xx body is ``{"error": {"code", "stage", "message"}}``.
Ingestion is single-writer: a second concurrent ingest gets 409, and
queries always see either the pre-ingest or post-ingest collection.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
from pathlib import Path
from typing import Iterator

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import pdftext
from .embedding import DEFAULT_DIM, HashEmbedder, embedder_from_id
from .errors import EmptyCorpus, MedragError, PathNotFound
from .generation import GenerationConfig, get_backend
from .ingest import SplitterConfig, chunk_document, load_directory
from .prompt import Answer, PipelineConfig, SystemPrompt, answer_payload, stream_answer
from .store import Collection, record_from_chunk

logger = logging.getLogger(__name__)

MAX_TOP_K = 50
PROBE_TTL_SECONDS = 30.0
DEFAULT_COLLECTION_NAME = "corpus"


class QueryRequest(BaseModel):
    question: str = ""
    top_k: int | None = None
    temperature: float | None = None
    max_new_tokens: int | None = None


class ServiceState:
    """Mutable server state: the live collection plus shared components."""

    def __init__(
        self,
        index_root: str | Path | None = None,
        collection_name: str = DEFAULT_COLLECTION_NAME,
        embedder=None,
        backend=None,
        splitter: SplitterConfig | None = None,
        pipeline: PipelineConfig | None = None,
        system: SystemPrompt | None = None,
        gen_config: GenerationConfig | None = None,
    ):
        self.index_root = Path(
            index_root or os.environ.get("MEDRAG_INDEX_DIR", "./medrag_index")
        )
        self.collection_name = collection_name
        self.embedder = embedder or HashEmbedder(DEFAULT_DIM)
        self.backend = backend or get_backend(os.environ.get("MEDRAG_BACKEND", "stub"))
        self.splitter = splitter or SplitterConfig()
        self.pipeline = pipeline or PipelineConfig()
        self.system = system or SystemPrompt()
        self.gen_config = gen_config or GenerationConfig(backend=self.backend.kind)
        self.collection = self._load_or_create()
        self.ingest_lock = threading.Lock()
        self._probe: tuple[float, bool] | None = None

    def _load_or_create(self) -> Collection:
        path = self.index_root / self.collection_name
        if (path / "manifest").is_file():
            collection = Collection.load(path)
            self.embedder = embedder_from_id(collection.embedder_id)
            return collection
        return Collection(
            self.collection_name, self.embedder.spec.embedder_id, self.embedder.spec.dim
        )

    def backend_reachable(self) -> bool:
        now = time.monotonic()
        if self._probe is not None and now - self._probe[0] <= PROBE_TTL_SECONDS:
            return self._probe[1]
        reachable = bool(self.backend.probe())
        self._probe = (now, reachable)
        return reachable


def _error_response(status: int, code: str, stage: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": {"code": code, "stage": stage, "message": message}},
    )


def create_app(state: ServiceState | None = None) -> FastAPI:
    state = state or ServiceState()
    app = FastAPI(title="medrag", version="0.1.0")
    app.state.medrag = state

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return _error_response(400, "bad_request", "request", str(exc.errors()[:1]))

    @app.exception_handler(MedragError)
    async def _medrag_handler(request: Request, exc: MedragError):
        return _error_response(500, "internal_error", "service", str(exc))

    @app.post("/api/ingest")
    async def ingest(request: Request):
        content_type = request.headers.get("content-type", "")
        corpus_dir: Path
        upload_tmp: tempfile.TemporaryDirectory | None = None
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            uploads = [v for v in form.values() if hasattr(v, "filename")]
            if not uploads:
                return _error_response(400, "bad_request", "ingest", "no files uploaded")
            upload_tmp = tempfile.TemporaryDirectory(prefix="medrag-upload-")
            corpus_dir = Path(upload_tmp.name)
            for upload in uploads:
                name = Path(upload.filename or "upload.txt").name
                (corpus_dir / name).write_bytes(await upload.read())
        else:
            try:
                body = await request.json()
            except json.JSONDecodeError:
                return _error_response(400, "bad_request", "ingest", "body must be JSON")
            path_value = body.get("path") if isinstance(body, dict) else None
            if not path_value:
                return _error_response(400, "bad_request", "ingest", "missing 'path'")
            corpus_dir = Path(path_value)

        if not state.ingest_lock.acquire(blocking=False):
            return _error_response(
                409, "ingest_in_progress", "ingest", "another ingestion is running"
            )
        try:
            skipped: list[dict[str, str]] = []
            try:
                documents = load_directory(
                    corpus_dir,
                    state.splitter,
                    pdf_extractor=pdftext.extract_pdf_pages,
                    on_skip=lambda doc_id, reason: skipped.append(
                        {"doc_id": doc_id, "reason": reason}
                    ),
                )
            except PathNotFound as exc:
                return _error_response(400, "path_not_found", "ingest", str(exc))
            except EmptyCorpus as exc:
                return _error_response(422, "empty_corpus", "ingest", str(exc))

            spec = state.embedder.spec
            collection = Collection(state.collection_name, spec.embedder_id, spec.dim)
            chunk_total = 0
            for doc in documents:
                chunks = chunk_document(doc, state.splitter)
                vectors = state.embedder.embed_batch([c.text for c in chunks])
                collection.upsert(
                    [
                        record_from_chunk(chunk, vector, doc.source_path)
                        for chunk, vector in zip(chunks, vectors)
                    ],
                    embedder_id=spec.embedder_id,
                )
                chunk_total += len(chunks)
            collection.save(state.index_root)
            state.collection = collection  # atomic swap: queries see old or new
            return {
                "documents": len(documents),
                "chunks": chunk_total,
                "collection": collection.name,
                "skipped": skipped,
            }
        finally:
            state.ingest_lock.release()
            if upload_tmp is not None:
                upload_tmp.cleanup()

    def _validated(body: QueryRequest) -> tuple[PipelineConfig, GenerationConfig] | JSONResponse:
        if not body.question.strip():
            return _error_response(400, "empty_question", "request", "question is empty")
        if body.top_k is not None and not (1 <= body.top_k <= MAX_TOP_K):
            return _error_response(
                400, "bad_top_k", "request", f"top_k must be in [1, {MAX_TOP_K}]"
            )
        pipeline = state.pipeline
        if body.top_k is not None:
            pipeline = PipelineConfig(
                top_k=body.top_k,
                context_char_budget=pipeline.context_char_budget,
                prompt_template_id=pipeline.prompt_template_id,
            )
        gen = state.gen_config
        if body.temperature is not None or body.max_new_tokens is not None:
            try:
                gen = GenerationConfig(
                    max_new_tokens=body.max_new_tokens or gen.max_new_tokens,
                    temperature=(
                        body.temperature if body.temperature is not None else gen.temperature
                    ),
                    repetition_penalty=gen.repetition_penalty,
                    model=gen.model,
                    backend=gen.backend,
                )
            except ValueError as exc:
                return _error_response(400, "bad_request", "request", str(exc))
        return pipeline, gen

    @app.post("/api/query")
    async def query(body: QueryRequest):
        validated = _validated(body)
        if isinstance(validated, JSONResponse):
            return validated
        pipeline, gen = validated
        citations = []
        truncated = False
        parts: list[str] = []
        for event in stream_answer(
            body.question,
            state.collection,
            state.embedder,
            state.backend,
            pipeline,
            state.system,
            gen,
        ):
            if event.kind == "meta":
                citations, truncated = list(event.citations), event.truncated
            elif event.kind == "token":
                parts.append(event.text)
            elif event.kind == "done":
                return answer_payload(
                    Answer(
                        text="".join(parts),
                        citations=citations,
                        truncated=truncated,
                        finish_reason=event.finish_reason or "stop",
                        timing_ms=event.timing_ms or {},
                    )
                )
            else:
                status = 503 if event.error_code == "backend_unavailable" else 502
                return _error_response(
                    status,
                    event.error_code or "backend_error",
                    event.stage or "generation",
                    event.message or "",
                )
        return _error_response(500, "internal_error", "generation", "no terminal event")

    @app.post("/api/chat")
    async def chat(body: QueryRequest):
        validated = _validated(body)
        if isinstance(validated, JSONResponse):
            return validated
        pipeline, gen = validated

        def sse() -> Iterator[str]:
            for event in stream_answer(
                body.question,
                state.collection,
                state.embedder,
                state.backend,
                pipeline,
                state.system,
                gen,
            ):
                if event.kind == "meta":
                    payload = {
                        "citations": [
                            {
                                "chunk_id": c.chunk_id,
                                "doc_id": c.doc_id,
                                "score": c.score,
                                "char_start": c.char_start,
                                "char_end": c.char_end,
                            }
                            for c in event.citations
                        ],
                        "truncated": event.truncated,
                    }
                elif event.kind == "token":
                    payload = {"text": event.text}
                elif event.kind == "done":
                    payload = {"finish_reason": event.finish_reason}
                else:
                    payload = {"stage": event.stage, "message": event.message}
                yield f"event: {event.kind}\ndata: {json.dumps(payload, ensure_ascii=False)}\n\n"

        return StreamingResponse(
            sse(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.get("/healthz")
    async def healthz():
        return {
            "status": "ok",
            "collection": {
                "name": state.collection.name,
                "records": len(state.collection),
                "dim": state.collection.dim,
            },
            "backend": {
                "kind": state.backend.kind,
                "reachable": state.backend_reachable(),
            },
        }

    return app


def mount_ui(app: FastAPI, ui_dir: str | Path) -> None:
    """Serve a static chat UI at the root path."""
    app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
