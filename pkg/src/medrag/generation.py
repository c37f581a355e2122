"""Answer generation backends.

A backend turns a rendered prompt into an ordered stream of TokenEvents:
zero or more ``token`` fragments whose concatenation is the answer text,
terminated by one ``done`` event. Transport failures surface as typed
exceptions (BackendUnavailable, BackendError, StreamInterrupted); the
pipeline layer converts those into terminal error events for consumers
that need the full stream grammar.

``StubBackend`` is deterministic and offline: it echoes the citation
tags found in the prompt, which lets end-to-end tests pin retrieval
behavior without model weights. ``RemoteBackend`` speaks the common
completions-over-HTTP protocol with incremental server-sent events, so
any llama-family inference server can sit behind it.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from typing import Iterator

import httpx

from .errors import BackendError, BackendUnavailable, StreamInterrupted

DEFAULT_MODEL = "TheBloke/Llama-2-13B"
DEFAULT_MAX_CONCURRENT_STREAMS = 4

# source tags look like "[{doc_id}#{seq}]", e.g. "[notes/gi.txt#2]"
CITATION_TAG = re.compile(r"\[([^\[\]]+?#\d+)\]")


@dataclass(frozen=True)
class GenerationConfig:
    """Decoding parameters plus backend selection.

    The numeric defaults are package conventions; tune per deployment.
    """

    max_new_tokens: int = 1024
    temperature: float = 0.7
    repetition_penalty: float = 1.1
    model: str = DEFAULT_MODEL
    backend: str = "stub"

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.repetition_penalty < 1:
            raise ValueError("repetition_penalty must be at least 1")
        if self.backend not in ("stub", "remote"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class TokenEvent:
    kind: str  # "token" | "done" | "error"
    text: str = ""
    finish_reason: str | None = None  # set on done: "stop" | "length"
    message: str | None = None  # set on error


def count_approx_tokens(text: str) -> int:
    """Approximate token count as ceil(chars / 4)."""
    return (len(text) + 3) // 4


class StubBackend:
    """Offline deterministic backend for tests and demos.

    Scans the prompt for source tags in order of appearance, deduplicates
    them, and streams the fixed answer
    ``STUB-ANSWER cites=[tag1,tag2,...] prompt_chars=<N>`` word by word.
    """

    kind = "stub"

    def generate_stream(
        self, prompt: str, config: GenerationConfig | None = None
    ) -> Iterator[TokenEvent]:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        config = config or GenerationConfig()
        seen: dict[str, None] = {}
        for tag in CITATION_TAG.findall(prompt):
            seen.setdefault(tag)
        answer = f"STUB-ANSWER cites=[{','.join(seen)}] prompt_chars={len(prompt)}"
        words = re.findall(r"\S+\s*", answer)
        for word in words[: config.max_new_tokens]:
            yield TokenEvent("token", text=word)
        if len(words) > config.max_new_tokens:
            yield TokenEvent("done", finish_reason="length")
        else:
            yield TokenEvent("done", finish_reason="stop")

    def probe(self) -> bool:
        return True


class RemoteBackend:
    """Streaming client for a completions-over-HTTP inference server.

    Sends ``POST {base_url}/v1/completions`` with ``"stream": true`` and
    parses the ``data: {json}`` event lines, terminated by
    ``data: [DONE]``. A connection that drops before the terminator
    raises StreamInterrupted carrying the partial text.
    """

    kind = "remote"

    def __init__(
        self,
        base_url: str,
        connect_timeout: float = 5.0,
        read_timeout: float = 120.0,
        max_concurrent_streams: int | None = DEFAULT_MAX_CONCURRENT_STREAMS,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = httpx.Timeout(read_timeout, connect=connect_timeout)
        self._gate = (
            threading.BoundedSemaphore(max_concurrent_streams)
            if max_concurrent_streams
            else None
        )

    def generate_stream(
        self, prompt: str, config: GenerationConfig | None = None
    ) -> Iterator[TokenEvent]:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        config = config or GenerationConfig(backend="remote")
        payload = {
            "model": config.model,
            "prompt": prompt,
            "max_tokens": config.max_new_tokens,
            "temperature": config.temperature,
            "repetition_penalty": config.repetition_penalty,
            "stream": True,
        }
        url = f"{self.base_url}/v1/completions"
        if self._gate:
            self._gate.acquire()
        partial: list[str] = []
        try:
            with httpx.Client(timeout=self.timeout) as client:
                try:
                    with client.stream("POST", url, json=payload) as response:
                        if response.status_code != 200:
                            body = response.read().decode("utf-8", errors="replace")
                            raise BackendError(response.status_code, body)
                        finish_reason: str | None = None
                        for line in response.iter_lines():
                            if not line.startswith("data:"):
                                continue
                            data = line[len("data:") :].strip()
                            if data == "[DONE]":
                                yield TokenEvent("done", finish_reason=finish_reason or "stop")
                                return
                            try:
                                event = json.loads(data)
                            except json.JSONDecodeError:
                                continue
                            choices = event.get("choices") or []
                            if not choices:
                                continue
                            fragment = choices[0].get("text") or ""
                            if choices[0].get("finish_reason"):
                                finish_reason = choices[0]["finish_reason"]
                            if fragment:
                                partial.append(fragment)
                                yield TokenEvent("token", text=fragment)
                        raise StreamInterrupted(
                            "stream ended without terminator", partial_text="".join(partial)
                        )
                except (httpx.ConnectError, httpx.ConnectTimeout) as exc:
                    raise BackendUnavailable(f"cannot reach backend at {url}: {exc}") from exc
                except httpx.HTTPError as exc:
                    raise StreamInterrupted(
                        f"connection dropped mid-stream: {exc}",
                        partial_text="".join(partial),
                    ) from exc
        finally:
            if self._gate:
                self._gate.release()

    def probe(self) -> bool:
        """Cheap reachability check: any HTTP response counts as reachable."""
        try:
            httpx.get(self.base_url + "/v1/models", timeout=httpx.Timeout(2.0))
            return True
        except httpx.HTTPError:
            return False


def get_backend(
    kind: str,
    base_url: str | None = None,
    max_concurrent_streams: int | None = DEFAULT_MAX_CONCURRENT_STREAMS,
):
    """Build a backend by name; remote reads MEDRAG_BACKEND_URL when unset."""
    if kind == "stub":
        return StubBackend()
    if kind == "remote":
        url = base_url or os.environ.get("MEDRAG_BACKEND_URL")
        if not url:
            raise ValueError("remote backend needs a base URL (MEDRAG_BACKEND_URL)")
        return RemoteBackend(url, max_concurrent_streams=max_concurrent_streams)
    raise ValueError(f"unknown backend {kind!r}")
