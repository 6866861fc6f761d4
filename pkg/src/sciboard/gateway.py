"""Chat and embedding gateway with a record/replay cassette.

Every request is keyed by a SHA-256 digest of its canonical serialization.
Recorded exchanges are appended to an NDJSON cassette; replay mode answers
from the cassette alone, which makes a whole pipeline run a pure function of
its inputs. Live traffic goes through a pluggable transport so tests never
need the network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Protocol

from .errors import (
    CassetteLoadError,
    CassetteMissError,
    ConfigurationError,
    GatewayError,
)

logger = logging.getLogger(__name__)

GREEDY = "greedy"
SAMPLED = "sampled"
DEFAULT_MAX_TOKENS = 2048

_CHAT = "chat"
_EMBED = "embed"


@dataclass(frozen=True)
class Decoding:
    """Decoding controls. Greedy mode carries no randomness parameters."""

    mode: str = GREEDY
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.mode not in (GREEDY, SAMPLED):
            raise ConfigurationError(f"unknown decoding mode: {self.mode!r}")
        if self.max_tokens < 1:
            raise ConfigurationError(f"max_tokens must be positive, got {self.max_tokens}")

    def to_json(self) -> dict[str, Any]:
        return {"mode": self.mode, "max_tokens": self.max_tokens}


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_content: str
    decoding: Decoding = field(default_factory=Decoding)

    def to_json(self) -> dict[str, Any]:
        return {
            "system_prompt": self.system_prompt,
            "user_content": self.user_content,
            "decoding": self.decoding.to_json(),
        }


@dataclass(frozen=True)
class TranscriptEntry:
    request_digest: str
    kind: str
    response: Any
    timestamp: str


def _canonical_bytes(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def chat_digest(request: ChatRequest) -> str:
    return hashlib.sha256(_canonical_bytes({"kind": _CHAT, "request": request.to_json()})).hexdigest()


def embed_digest(text: str) -> str:
    return hashlib.sha256(_canonical_bytes({"kind": _EMBED, "text": text})).hexdigest()


class Transport(Protocol):
    """Backend that actually talks to a model provider."""

    def chat(self, request: ChatRequest) -> str: ...

    def embed(self, texts: list[str]) -> list[list[float]]: ...


class HttpTransport:
    """Live transport speaking the common chat-completions / embeddings HTTP shape."""

    def __init__(
        self,
        base_url: str,
        model: str,
        embedding_model: str = "",
        api_key: str = "",
        timeout: float = 60.0,
        retries: int = 2,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.embedding_model = embedding_model or model
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = httpx.post(
                    f"{self.base_url}{path}", json=payload, headers=headers, timeout=self.timeout
                )
                response.raise_for_status()
                return response.json()
            except Exception as exc:  # transport and HTTP failures are both retryable
                last_error = exc
                if attempt < self.retries:
                    time.sleep(0.5 * (attempt + 1))
        raise GatewayError(f"live call to {path} failed after {self.retries + 1} attempts: {last_error}")

    def chat(self, request: ChatRequest) -> str:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_content},
            ],
            "max_tokens": request.decoding.max_tokens,
        }
        if request.decoding.mode == GREEDY:
            payload["temperature"] = 0.0
        data = self._post("/chat/completions", payload)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed chat response: {exc}") from exc

    def embed(self, texts: list[str]) -> list[list[float]]:
        data = self._post("/embeddings", {"model": self.embedding_model, "input": texts})
        try:
            rows = sorted(data["data"], key=lambda row: row["index"])
            return [list(map(float, row["embedding"])) for row in rows]
        except (KeyError, TypeError) as exc:
            raise GatewayError(f"malformed embeddings response: {exc}") from exc


LIVE = "live"
RECORD = "record"
REPLAY = "replay"


class LlmGateway:
    """Front door for all model traffic.

    Modes:
      live    -- forward to the transport, keep nothing.
      record  -- answer from the cassette when possible, otherwise call the
                 transport and append the exchange (each request recorded once).
      replay  -- answer from the cassette only; a miss is an error.
    """

    def __init__(
        self,
        transport: Transport | None = None,
        mode: str = LIVE,
        cassette_path: str | Path | None = None,
    ) -> None:
        if mode not in (LIVE, RECORD, REPLAY):
            raise ConfigurationError(f"unknown gateway mode: {mode!r}")
        self.transport = transport
        self.mode = mode
        self.cassette_path = Path(cassette_path) if cassette_path is not None else None
        self._cache: dict[str, TranscriptEntry] = {}
        self._lock = threading.Lock()
        self.live_calls = 0
        if mode == LIVE:
            if transport is None:
                raise ConfigurationError("live mode requires a transport")
        elif mode == RECORD:
            if self.cassette_path is None:
                raise ConfigurationError("record mode requires a cassette path")
            if transport is None:
                raise ConfigurationError("record mode requires a transport")
            if self.cassette_path.exists():
                self._cache = self._read_cassette(self.cassette_path, must_exist=True)
            else:
                self.cassette_path.parent.mkdir(parents=True, exist_ok=True)
        else:
            if self.cassette_path is None:
                raise ConfigurationError("replay mode requires a cassette path")
            self._cache = self._read_cassette(self.cassette_path, must_exist=True)

    # -- cassette management -------------------------------------------------

    @classmethod
    def load_cassette(cls, transport: Transport | None, path: str | Path) -> "LlmGateway":
        """Replay-only gateway answering from the cassette at `path`."""
        return cls(transport, mode=REPLAY, cassette_path=path)

    @classmethod
    def record_cassette(cls, transport: Transport, path: str | Path) -> "LlmGateway":
        """Recording gateway that appends new exchanges to the cassette at `path`."""
        return cls(transport, mode=RECORD, cassette_path=path)

    @staticmethod
    def _read_cassette(path: Path, must_exist: bool) -> dict[str, TranscriptEntry]:
        if not path.exists():
            if must_exist:
                raise CassetteLoadError(f"cassette not found: {path}")
            return {}
        cache: dict[str, TranscriptEntry] = {}
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    entry = TranscriptEntry(
                        request_digest=record["digest"],
                        kind=record["kind"],
                        response=record["response"],
                        timestamp=record.get("timestamp", ""),
                    )
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise CassetteLoadError(f"corrupt cassette line {lineno} in {path}: {exc}") from exc
                if entry.kind not in (_CHAT, _EMBED):
                    raise CassetteLoadError(
                        f"corrupt cassette line {lineno} in {path}: unknown kind {entry.kind!r}"
                    )
                if entry.request_digest in cache:
                    logger.warning(
                        "cassette %s line %d: duplicate digest %s, keeping the later entry",
                        path,
                        lineno,
                        entry.request_digest,
                    )
                cache[entry.request_digest] = entry
        return cache

    def _append(self, digest: str, kind: str, response: Any) -> TranscriptEntry:
        entry = TranscriptEntry(
            request_digest=digest,
            kind=kind,
            response=response,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )
        assert self.cassette_path is not None
        line = json.dumps(
            {
                "digest": digest,
                "kind": kind,
                "response": response,
                "timestamp": entry.timestamp,
            },
            ensure_ascii=False,
        )
        with open(self.cassette_path, "a", encoding="utf-8") as handle:
            handle.write(line + "\n")
        self._cache[digest] = entry
        return entry

    # -- traffic ---------------------------------------------------------------

    def _require_transport(self) -> Transport:
        if self.transport is None:
            raise ConfigurationError("no transport configured for live traffic")
        return self.transport

    def complete(self, request: ChatRequest) -> str:
        digest = chat_digest(request)
        if self.mode in (RECORD, REPLAY):
            with self._lock:
                entry = self._cache.get(digest)
            if entry is not None:
                return str(entry.response)
            if self.mode == REPLAY:
                raise CassetteMissError(digest, "chat request not in cassette")
        transport = self._require_transport()
        self.live_calls += 1
        text = transport.chat(request)
        if self.mode == RECORD:
            with self._lock:
                cached = self._cache.get(digest)
                if cached is not None:
                    return str(cached.response)
                self._append(digest, _CHAT, text)
        return text

    def embed(self, texts: list[str]) -> list[list[float]]:
        """Embed a batch. Each distinct text is keyed (and recorded) on its own,
        so replay does not depend on how texts were batched when recording."""
        if not texts:
            raise ValueError("embed requires at least one text")
        digests = [embed_digest(text) for text in texts]
        by_digest: dict[str, list[float]] = {}
        if self.mode in (RECORD, REPLAY):
            with self._lock:
                for digest in digests:
                    entry = self._cache.get(digest)
                    if entry is not None:
                        by_digest[digest] = [float(v) for v in entry.response]
        missing: list[tuple[str, str]] = []
        seen: set[str] = set()
        for text, digest in zip(texts, digests):
            if digest not in by_digest and digest not in seen:
                missing.append((text, digest))
                seen.add(digest)
        if missing:
            if self.mode == REPLAY:
                raise CassetteMissError(missing[0][1], f"embedding not in cassette: {missing[0][0][:80]!r}")
            transport = self._require_transport()
            self.live_calls += 1
            vectors = transport.embed([text for text, _ in missing])
            if len(vectors) != len(missing):
                raise GatewayError(
                    f"transport returned {len(vectors)} embeddings for {len(missing)} texts"
                )
            for (_, digest), vector in zip(missing, vectors):
                vector = [float(v) for v in vector]
                if self.mode == RECORD:
                    with self._lock:
                        cached = self._cache.get(digest)
                        if cached is not None:
                            vector = [float(v) for v in cached.response]
                        else:
                            self._append(digest, _EMBED, vector)
                by_digest[digest] = vector
        return [by_digest[digest] for digest in digests]
