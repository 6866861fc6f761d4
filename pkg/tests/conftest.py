"""Shared test helpers: deterministic fake transports and tuple builders."""

from __future__ import annotations

import hashlib
from pathlib import Path

import pytest

from sciboard.extraction import ResultTuple
from sciboard.gateway import ChatRequest, LlmGateway

DATA_DIR = Path(__file__).resolve().parent.parent / "data" / "mini"


def hash_vector(text: str, dim: int = 16) -> list[float]:
    """Deterministic pseudo-embedding derived from the text bytes alone."""
    out: list[float] = []
    for i in range(dim):
        digest = hashlib.sha256(f"{text}#{i}".encode("utf-8")).digest()
        out.append(int.from_bytes(digest[:8], "big") / 2**63 - 1.0)
    return out


class ScriptedTransport:
    """Transport whose chat behavior is a plain function; embeddings are
    hash-derived unless pinned in `vectors`."""

    def __init__(self, chat_fn=None, vectors: dict[str, list[float]] | None = None, dim: int = 16):
        self.chat_fn = chat_fn or (lambda request: "")
        self.vectors = vectors or {}
        self.dim = dim
        self.chat_calls: list[ChatRequest] = []
        self.embed_calls: list[list[str]] = []

    def chat(self, request: ChatRequest) -> str:
        self.chat_calls.append(request)
        return self.chat_fn(request)

    def embed(self, texts: list[str]) -> list[list[float]]:
        self.embed_calls.append(list(texts))
        return [self.vectors.get(t, hash_vector(t, self.dim)) for t in texts]


def scripted_gateway(chat_fn=None, vectors=None, dim: int = 16) -> LlmGateway:
    return LlmGateway(transport=ScriptedTransport(chat_fn, vectors, dim), mode="live")


def make_tuple(
    paper_id: str = "p1",
    task: str = "Named Entity Recognition (NER)",
    dataset: str = "CoNLL-2003 - English",
    metric: str = "F1",
    result_raw: str = "91.26",
    result_value: float | None = None,
) -> ResultTuple:
    return ResultTuple(
        paper_id=paper_id,
        task=task,
        dataset=dataset,
        metric=metric,
        result_raw=result_raw,
        result_value=result_value,
    )


@pytest.fixture
def mini_paths() -> dict[str, Path]:
    return {
        "bundles": DATA_DIR / "bundles",
        "gold": DATA_DIR / "gold.json",
        "cassette": DATA_DIR / "cassette.ndjson",
    }
