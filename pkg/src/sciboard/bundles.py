"""Document bundles: the file contract between ingestion and this pipeline.

A bundle is one paper's extracted content: ordered body-text chunks plus
linearized tables, stored as `<paper_id>.bundle.json`. The pipeline consumes
bundles only through this schema; how they were produced is out of scope here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import BundleError

MAX_CHUNK_CHARS = 2000
BUNDLE_SUFFIX = ".bundle.json"


@dataclass(frozen=True)
class DocumentBundle:
    paper_id: str
    chunks: tuple[str, ...]
    tables: tuple[str, ...]
    source_path: str

    def to_json(self) -> dict[str, Any]:
        return {
            "paper_id": self.paper_id,
            "chunks": list(self.chunks),
            "tables": list(self.tables),
            "source_path": self.source_path,
        }


def validate_bundle_data(data: Any, where: str = "bundle") -> list[str]:
    """Schema and invariant violations for raw bundle data, empty when valid."""
    problems: list[str] = []
    if not isinstance(data, dict):
        return [f"{where}: expected an object, got {type(data).__name__}"]
    paper_id = data.get("paper_id")
    if not isinstance(paper_id, str) or not paper_id.strip():
        problems.append(f"{where}.paper_id: must be a non-empty string")
    for list_field in ("chunks", "tables"):
        value = data.get(list_field)
        if not isinstance(value, list):
            problems.append(f"{where}.{list_field}: must be a list of strings")
            continue
        for i, item in enumerate(value):
            if not isinstance(item, str):
                problems.append(f"{where}.{list_field}[{i}]: must be a string")
            elif list_field == "chunks":
                if not item:
                    problems.append(f"{where}.chunks[{i}]: empty chunk")
                elif len(item) > MAX_CHUNK_CHARS:
                    problems.append(
                        f"{where}.chunks[{i}]: {len(item)} chars exceeds the {MAX_CHUNK_CHARS} limit"
                    )
    if not isinstance(data.get("source_path"), str):
        problems.append(f"{where}.source_path: must be a string")
    return problems


def load_bundle(path: str | Path) -> DocumentBundle:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise BundleError(f"cannot read bundle {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BundleError(f"bundle {path} is not valid JSON: {exc}") from exc
    problems = validate_bundle_data(data, where=str(path))
    if problems:
        raise BundleError("invalid bundle: " + "; ".join(problems))
    return DocumentBundle(
        paper_id=data["paper_id"],
        chunks=tuple(data["chunks"]),
        tables=tuple(data["tables"]),
        source_path=data["source_path"],
    )


def load_bundles(directory: str | Path) -> list[DocumentBundle]:
    """Load every `*.bundle.json` under `directory`, sorted by paper id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise BundleError(f"bundle directory not found: {directory}")
    paths = sorted(directory.glob(f"*{BUNDLE_SUFFIX}"))
    if not paths:
        raise BundleError(f"no *{BUNDLE_SUFFIX} files in {directory}")
    bundles: list[DocumentBundle] = []
    seen: dict[str, Path] = {}
    for path in paths:
        bundle = load_bundle(path)
        if bundle.paper_id in seen:
            raise BundleError(
                f"duplicate paper_id {bundle.paper_id!r} in {path} (already in {seen[bundle.paper_id]})"
            )
        seen[bundle.paper_id] = path
        bundles.append(bundle)
    bundles.sort(key=lambda b: b.paper_id)
    return bundles
