"""Per-paper text chunking and in-memory vector retrieval.

Each paper's chunks are embedded into one index; queries return the most
similar chunks by cosine. Tables are deliberately not indexed: they are always
appended to extraction prompts in full, so retrieval only competes over body
text.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Protocol, runtime_checkable

import numpy as np

from .bundles import DocumentBundle
from .errors import ConfigurationError, GatewayError

logger = logging.getLogger(__name__)

MAX_CHUNK_CHARS = 2000
# When cutting a chunk, prefer the last whitespace within this many chars of
# the hard limit so words survive intact; a window keeps pathological
# whitespace-free text from producing tiny chunks.
BOUNDARY_WINDOW = 200

RETRIEVAL_QUERY = "Main task, datasets and evaluation metrics"
DEFAULT_TOP_K = 5


@runtime_checkable
class Embedder(Protocol):
    def embed(self, texts: list[str]) -> list[list[float]]: ...


EmbedLike = Embedder | Callable[[list[str]], list[list[float]]]


def _embed_fn(embedder: EmbedLike) -> Callable[[list[str]], list[list[float]]]:
    if isinstance(embedder, Embedder):
        return embedder.embed
    return embedder


def chunk_text(body: str, max_len: int = MAX_CHUNK_CHARS) -> list[str]:
    """Split `body` into pieces of at most `max_len` chars whose concatenation
    reproduces `body` exactly, cutting after whitespace when one falls within
    the boundary window."""
    if max_len < 1:
        raise ConfigurationError(f"max_len must be positive, got {max_len}")
    window = min(BOUNDARY_WINDOW, max_len - 1)
    chunks: list[str] = []
    pos = 0
    total = len(body)
    while pos < total:
        hard_end = pos + max_len
        if hard_end >= total:
            chunks.append(body[pos:])
            break
        cut = hard_end
        for i in range(hard_end - 1, hard_end - 1 - window, -1):
            if body[i].isspace():
                cut = i + 1
                break
        chunks.append(body[pos:cut])
        pos = cut
    return chunks


@dataclass(frozen=True)
class Chunk:
    paper_id: str
    ordinal: int
    text: str


@dataclass(frozen=True)
class RetrievalQuery:
    text: str = RETRIEVAL_QUERY
    top_k: int = DEFAULT_TOP_K


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    similarity: float


@dataclass
class VectorIndex:
    paper_id: str
    dimension: int
    chunks: list[Chunk]
    vectors: np.ndarray  # shape (len(chunks), dimension)

    def __len__(self) -> int:
        return len(self.chunks)


def index_bundle(bundle: DocumentBundle, embedder: EmbedLike) -> VectorIndex:
    """Embed a bundle's body chunks (never its tables) into a vector index."""
    chunks = [Chunk(bundle.paper_id, i, text) for i, text in enumerate(bundle.chunks)]
    if not chunks:
        return VectorIndex(paper_id=bundle.paper_id, dimension=0, chunks=[], vectors=np.zeros((0, 0)))
    try:
        raw = _embed_fn(embedder)([chunk.text for chunk in chunks])
    except GatewayError:
        raise
    except Exception as exc:
        raise GatewayError(f"embedding failed for bundle {bundle.paper_id}: {exc}") from exc
    if len(raw) != len(chunks):
        raise GatewayError(
            f"bundle {bundle.paper_id}: embedder returned {len(raw)} vectors for {len(chunks)} chunks"
        )
    vectors = np.asarray(raw, dtype=np.float64)
    if vectors.ndim != 2:
        raise GatewayError(f"bundle {bundle.paper_id}: embeddings are not uniform-length vectors")
    return VectorIndex(
        paper_id=bundle.paper_id, dimension=int(vectors.shape[1]), chunks=chunks, vectors=vectors
    )


def _cosine_to_all(vectors: np.ndarray, query: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    query_norm = float(np.linalg.norm(query))
    sims = np.zeros(len(vectors))
    if query_norm == 0.0:
        return sims
    valid = norms > 0.0
    sims[valid] = (vectors[valid] @ query) / (norms[valid] * query_norm)
    return sims


def retrieve(index: VectorIndex, query: RetrievalQuery, embedder: EmbedLike) -> list[ScoredChunk]:
    """Top-k chunks by descending cosine similarity; ties break by ordinal."""
    if query.top_k < 1:
        raise ConfigurationError(f"top_k must be positive, got {query.top_k}")
    if len(index) == 0:
        return []
    raw = _embed_fn(embedder)([query.text])
    query_vec = np.asarray(raw[0], dtype=np.float64)
    if query_vec.shape != (index.dimension,):
        raise ConfigurationError(
            f"query embedding dimension {query_vec.shape[0]} does not match index dimension "
            f"{index.dimension} for paper {index.paper_id}"
        )
    sims = _cosine_to_all(index.vectors, query_vec)
    order = sorted(
        range(len(index)),
        key=lambda i: (-sims[i], index.chunks[i].paper_id, index.chunks[i].ordinal),
    )
    return [ScoredChunk(index.chunks[i], float(sims[i])) for i in order[: query.top_k]]


def save_index(index: VectorIndex, path: str | Path) -> None:
    payload: dict[str, Any] = {
        "paper_id": index.paper_id,
        "dimension": index.dimension,
        "vectors": {str(chunk.ordinal): vec.tolist() for chunk, vec in zip(index.chunks, index.vectors)},
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_index(path: str | Path, bundle: DocumentBundle) -> VectorIndex:
    """Rebuild an index from persisted vectors plus the bundle's chunk texts."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("paper_id") != bundle.paper_id:
        raise ConfigurationError(
            f"index {path} belongs to paper {data.get('paper_id')!r}, not {bundle.paper_id!r}"
        )
    chunks = [Chunk(bundle.paper_id, i, text) for i, text in enumerate(bundle.chunks)]
    stored = data.get("vectors", {})
    if len(stored) != len(chunks):
        raise ConfigurationError(
            f"index {path} has {len(stored)} vectors for {len(chunks)} bundle chunks"
        )
    dimension = int(data["dimension"])
    vectors = np.zeros((len(chunks), dimension))
    for chunk in chunks:
        key = str(chunk.ordinal)
        if key not in stored:
            raise ConfigurationError(f"index {path} is missing a vector for chunk {key}")
        vec = np.asarray(stored[key], dtype=np.float64)
        if vec.shape != (dimension,):
            raise ConfigurationError(f"index {path} chunk {key} has dimension {vec.shape}")
        vectors[chunk.ordinal] = vec
    return VectorIndex(paper_id=bundle.paper_id, dimension=dimension, chunks=chunks, vectors=vectors)
