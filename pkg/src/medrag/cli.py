"""Command line interface: medrag ingest | query | serve.

Exit codes: 0 success, 2 usage error, 3 corpus/index error, 4 backend error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import pdftext
from .embedding import HashEmbedder, embedder_from_id
from .errors import (
    BackendError,
    BackendUnavailable,
    CorruptIndex,
    EmptyCorpus,
    MedragError,
    PathNotFound,
    PipelineError,
    StreamInterrupted,
    VersionUnsupported,
)
from .generation import GenerationConfig, get_backend
from .ingest import SplitterConfig, chunk_document, dump_chunks, load_directory
from .prompt import PipelineConfig, answer_payload, answer_question
from .store import Collection, record_from_chunk

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CORPUS = 3
EXIT_BACKEND = 4

COLLECTION_NAME = "corpus"


def _default_index() -> str:
    return os.environ.get("MEDRAG_INDEX_DIR", "./medrag_index")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medrag",
        description="Retrieval-augmented medical question answering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="load, split, embed, and index a corpus directory")
    p_ingest.add_argument("directory", help="corpus directory of .txt/.md/.pdf files")
    p_ingest.add_argument("--chunk-size", type=int, default=1024)
    p_ingest.add_argument("--chunk-overlap", type=int, default=64)
    p_ingest.add_argument("--index", default=None, help="index directory (MEDRAG_INDEX_DIR)")
    p_ingest.add_argument("--dump-chunks", default=None, help="write a chunk JSONL debug file")

    p_query = sub.add_parser("query", help="answer one question against the index")
    p_query.add_argument("question")
    p_query.add_argument("--top-k", type=int, default=5)
    p_query.add_argument("--backend", choices=["stub", "remote"], default=None)
    p_query.add_argument("--backend-url", default=None, help="remote backend base URL")
    p_query.add_argument("--json", action="store_true", help="emit the full answer payload as JSON")
    p_query.add_argument("--index", default=None)
    p_query.add_argument("--temperature", type=float, default=None)
    p_query.add_argument("--max-new-tokens", type=int, default=None)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=None, help="port (MEDRAG_PORT, 8080)")
    p_serve.add_argument("--index", default=None)
    p_serve.add_argument("--backend", choices=["stub", "remote"], default=None)
    p_serve.add_argument("--backend-url", default=None)
    p_serve.add_argument("--ui-dir", default=None, help="static chat UI directory to serve at /")

    return parser


def cmd_ingest(args, parser) -> int:
    try:
        config = SplitterConfig(chunk_size=args.chunk_size, chunk_overlap=args.chunk_overlap)
    except ValueError as exc:
        parser.error(str(exc))
    index_root = Path(args.index or _default_index())
    try:
        documents = load_directory(
            args.directory, config, pdf_extractor=pdftext.extract_pdf_pages
        )
    except (PathNotFound, EmptyCorpus) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORPUS
    embedder = HashEmbedder()
    collection = Collection(COLLECTION_NAME, embedder.spec.embedder_id, embedder.spec.dim)
    all_chunks = []
    for doc in documents:
        chunks = chunk_document(doc, config)
        vectors = embedder.embed_batch([c.text for c in chunks])
        collection.upsert(
            [record_from_chunk(c, v, doc.source_path) for c, v in zip(chunks, vectors)],
            embedder_id=embedder.spec.embedder_id,
        )
        all_chunks.extend(chunks)
    collection.save(index_root)
    if args.dump_chunks:
        dump_chunks(all_chunks, args.dump_chunks)
    print(f"{len(documents)} documents, {len(all_chunks)} chunks")
    return EXIT_OK


def cmd_query(args, parser) -> int:
    if not args.question.strip():
        parser.error("question must be non-empty")
    index_root = Path(args.index or _default_index())
    collection_dir = index_root / COLLECTION_NAME
    try:
        collection = Collection.load(collection_dir)
    except (CorruptIndex, VersionUnsupported) as exc:
        print(f"error: {exc} (run `medrag ingest` first?)", file=sys.stderr)
        return EXIT_CORPUS
    try:
        embedder = embedder_from_id(collection.embedder_id, args.backend_url)
        backend_kind = args.backend or os.environ.get("MEDRAG_BACKEND", "stub")
        backend = get_backend(backend_kind, args.backend_url)
    except ValueError as exc:
        parser.error(str(exc))
    pipeline = PipelineConfig(top_k=args.top_k)
    gen = GenerationConfig(
        max_new_tokens=args.max_new_tokens or 1024,
        temperature=args.temperature if args.temperature is not None else 0.7,
        backend=backend.kind,
    )

    stream_to_stdout = not args.json

    def on_token(fragment: str) -> None:
        if stream_to_stdout:
            print(fragment, end="", flush=True)

    try:
        answer = answer_question(
            args.question, collection, embedder, backend,
            pipeline, gen_config=gen, on_token=on_token,
        )
    except PipelineError as exc:
        if stream_to_stdout and exc.partial_text:
            print()
        print(f"error ({exc.stage}): {exc}", file=sys.stderr)
        return EXIT_BACKEND if exc.stage == "generation" else EXIT_CORPUS
    except (BackendUnavailable, BackendError, StreamInterrupted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    if args.json:
        print(json.dumps(answer_payload(answer), indent=2))
    else:
        print()
        print("Sources:")
        if not answer.citations:
            print("  (none)")
        for citation in answer.citations:
            print(f"  {citation.chunk_id} (score={citation.score:.3f})")
    return EXIT_OK


def cmd_serve(args, parser) -> int:
    import uvicorn

    from .service import ServiceState, create_app, mount_ui

    backend_kind = args.backend or os.environ.get("MEDRAG_BACKEND", "stub")
    try:
        backend = get_backend(backend_kind, args.backend_url)
    except ValueError as exc:
        parser.error(str(exc))
    state = ServiceState(index_root=args.index or _default_index(), backend=backend)
    app = create_app(state)
    if args.ui_dir:
        if not Path(args.ui_dir).is_dir():
            print(f"error: --ui-dir {args.ui_dir} is not a directory", file=sys.stderr)
            return EXIT_CORPUS
        mount_ui(app, args.ui_dir)
    port = args.port or int(os.environ.get("MEDRAG_PORT", "8080"))
    uvicorn.run(app, host=args.host, port=port)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ingest":
            return cmd_ingest(args, parser)
        if args.command == "query":
            return cmd_query(args, parser)
        if args.command == "serve":
            return cmd_serve(args, parser)
    except MedragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORPUS
    parser.error(f"unknown command {args.command!r}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
