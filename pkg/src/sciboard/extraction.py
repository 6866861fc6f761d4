"""Result-tuple extraction from paper context.

A single chat request per paper sees the retrieved body chunks followed by
every table, and must answer with a JSON array of task / dataset / metric /
result objects. Parsing is deliberately forgiving about prose around the
array and strict about the objects inside it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

from .audit import AuditLog
from .corpus import ScoredChunk
from .errors import ContextEmptyError, ExtractionParseError
from .gateway import ChatRequest, Decoding
from .textnorm import canon, triple_key

if TYPE_CHECKING:
    from .boards import MetricDirectionRegistry

logger = logging.getLogger(__name__)

EXTRACTION_SYSTEM_PROMPT = (
    "You will be given several parts of a research paper as input. Please extract "
    "different tuples including the name of the task addressed in the paper, utilized "
    "datasets and evaluation metrics and corresponding results. Extract these tuples "
    "for only the best results obtained by proposed methods of the paper not baselines. "
    "Please use json format for each different tuple. Example format: "
    '[{"Task": "Task name", "Dataset": "Dataset name", "Metric": "Metric name", '
    '"Result": "Result score"}]. Your answer will immediately start with the json '
    "object satisfying the given template and contain nothing else."
)

_FIELD_KEYS = ("task", "dataset", "metric", "result")


@dataclass(frozen=True)
class ResultTuple:
    """One reported result: what was measured, where, how, and the score."""

    paper_id: str
    task: str
    dataset: str
    metric: str
    result_raw: str
    result_value: float | None = None

    def key(self) -> str:
        return triple_key(self.task, self.dataset, self.metric)

    def to_json(self) -> dict[str, object]:
        out: dict[str, object] = {
            "paper_id": self.paper_id,
            "task": self.task,
            "dataset": self.dataset,
            "metric": self.metric,
            "result_raw": self.result_raw,
        }
        if self.result_value is not None:
            out["result_value"] = self.result_value
        return out

    @staticmethod
    def from_json(data: dict[str, object]) -> "ResultTuple":
        return ResultTuple(
            paper_id=str(data["paper_id"]),
            task=str(data["task"]),
            dataset=str(data["dataset"]),
            metric=str(data["metric"]),
            result_raw=str(data["result_raw"]),
            result_value=(None if data.get("result_value") is None else float(data["result_value"])),  # type: ignore[arg-type]
        )


def build_extraction_prompt(
    chunks: list[ScoredChunk],
    tables: list[str],
    few_shot: str | None = None,
    decoding: Decoding | None = None,
) -> ChatRequest:
    """Assemble the per-paper request: retrieved chunks in similarity order,
    then all tables, as blank-line separated blocks."""
    blocks: list[str] = []
    if few_shot:
        blocks.append(few_shot)
    blocks.extend(scored.chunk.text for scored in chunks)
    blocks.extend(tables)
    if not chunks and not tables:
        raise ContextEmptyError("no chunks and no tables: nothing to extract from")
    return ChatRequest(
        system_prompt=EXTRACTION_SYSTEM_PROMPT,
        user_content="\n\n".join(blocks),
        decoding=decoding or Decoding(),
    )


def _first_json_array(text: str) -> list | None:
    """First bracket-balanced, parseable JSON array in `text`; numeric literals
    stay as their source text so values keep the paper's spelling."""
    start = text.find("[")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch in "[{":
                depth += 1
            elif ch in "]}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : i + 1]
                    try:
                        parsed = json.loads(
                            candidate, parse_float=lambda s: s, parse_int=lambda s: s
                        )
                    except json.JSONDecodeError:
                        break
                    if isinstance(parsed, list):
                        return parsed
                    break
        start = text.find("[", start + 1)
    return None


def parse_tuples(response: str, paper_id: str, audit: AuditLog | None = None) -> list[ResultTuple]:
    """Recover tuples from a model response.

    Objects missing any of the four fields, or with empty names, are dropped
    and audited rather than failing the paper.
    """
    audit = audit if audit is not None else AuditLog()
    array = _first_json_array(response)
    if array is None:
        raise ExtractionParseError(
            f"paper {paper_id}: no JSON tuple array found in response", raw_response=response
        )
    tuples: list[ResultTuple] = []
    for i, item in enumerate(array):
        if not isinstance(item, dict):
            audit.add("extraction", "non-object array element", f"index {i}: {item!r}", paper_id)
            continue
        fields: dict[str, str] = {}
        bad = False
        lowered = {str(k).strip().casefold(): v for k, v in item.items()}
        for key in _FIELD_KEYS:
            if key not in lowered:
                audit.add("extraction", "missing field", f"index {i}: no {key!r} key", paper_id)
                bad = True
                break
            value = lowered[key]
            if isinstance(value, bool) or not isinstance(value, str):
                # parse_int/parse_float keep numerics as strings, so anything
                # non-string here is a nested structure or a JSON literal
                audit.add(
                    "extraction", "non-text field", f"index {i}: {key}={value!r}", paper_id
                )
                bad = True
                break
            fields[key] = value.strip()
        if bad:
            continue
        if not (fields["task"] and fields["dataset"] and fields["metric"]):
            audit.add("extraction", "empty entity name", f"index {i}: {fields!r}", paper_id)
            continue
        tuples.append(
            ResultTuple(
                paper_id=paper_id,
                task=fields["task"],
                dataset=fields["dataset"],
                metric=fields["metric"],
                result_raw=fields["result"],
            )
        )
    return tuples


def dedupe_best(
    tuples: list[ResultTuple],
    directions: "MetricDirectionRegistry",
    audit: AuditLog | None = None,
) -> list[ResultTuple]:
    """Keep one tuple per (task, dataset, metric): the best numeric value under
    the metric's direction. Non-numeric results survive only when the group has
    no numeric value at all. `result_value` must already be populated where the
    raw result is numeric."""
    audit = audit if audit is not None else AuditLog()
    best: dict[str, ResultTuple] = {}
    order: list[str] = []
    for candidate in tuples:
        key = candidate.key()
        current = best.get(key)
        if current is None:
            best[key] = candidate
            order.append(key)
            continue
        keep, drop = current, candidate
        if candidate.result_value is not None:
            if current.result_value is None:
                keep, drop = candidate, current
            else:
                higher_wins = directions.for_board(candidate.task, candidate.dataset, candidate.metric) == "higher"
                better = (
                    candidate.result_value > current.result_value
                    if higher_wins
                    else candidate.result_value < current.result_value
                )
                if better:
                    keep, drop = candidate, current
        best[key] = keep
        audit.add(
            "extraction",
            "duplicate tuple discarded",
            f"kept {keep.result_raw!r} over {drop.result_raw!r} for "
            f"({keep.task}, {keep.dataset}, {keep.metric})",
            candidate.paper_id,
        )
    return [best[key] for key in order]


def canonical_rename(tuple_: ResultTuple, task: str, dataset: str, metric: str) -> ResultTuple:
    return replace(tuple_, task=task, dataset=dataset, metric=metric)


def distinct_triples(tuples: list[ResultTuple]) -> list[tuple[str, str, str]]:
    """Unique (task, dataset, metric) surfaces in first-seen order."""
    seen: set[str] = set()
    out: list[tuple[str, str, str]] = []
    for t in tuples:
        key = t.key()
        if key not in seen:
            seen.add(key)
            out.append((t.task, t.dataset, t.metric))
    return out
