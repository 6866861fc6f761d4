"""Gold dataset loading and run-artifact persistence.

A gold file carries papers with their annotated tuples, the complete entity
taxonomy, and optional direction overrides and header statistics. Gold
leaderboards are derived through the same builder the pipeline uses for
predictions, so both sides of every comparison share one code path.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .boards import (
    DEFAULT_ENTRY_THRESHOLD,
    DEFAULT_PERCENTAGE_METRICS,
    HIGHER,
    LOWER,
    Leaderboard,
    MetricDirectionRegistry,
    build_leaderboards,
)
from .errors import ArtifactError, GoldDataError, GoldIntegrityError
from .extraction import ResultTuple
from .textnorm import canon, triple_key

logger = logging.getLogger(__name__)

ENTITY_TYPES = ("task", "dataset", "metric")

CONFIG_FILE = "config.json"
EXTRACTIONS_FILE = "extractions.json"
NORMALIZATION_FILE = "normalization.json"
LEADERBOARDS_FILE = "leaderboards.json"
EVAL_REPORT_FILE = "eval_report.json"

_STAT_TOLERANCE = 0.01


@dataclass
class GoldDataset:
    papers: list[str]
    tuples: dict[str, list[ResultTuple]]
    taxonomy: dict[str, list[str]]
    directions: dict[str, str] = field(default_factory=dict)  # triple key -> higher|lower
    percentage_metrics: frozenset[str] | None = None
    stats: dict[str, Any] | None = None

    def all_tuples(self) -> list[ResultTuple]:
        return [t for paper_id in self.papers for t in self.tuples.get(paper_id, [])]

    def gold_triples(self) -> list[tuple[str, str, str]]:
        seen: set[str] = set()
        out: list[tuple[str, str, str]] = []
        for t in self.all_tuples():
            key = t.key()
            if key not in seen:
                seen.add(key)
                out.append((t.task, t.dataset, t.metric))
        return out

    def direction_registry(self) -> MetricDirectionRegistry:
        return MetricDirectionRegistry(triple_overrides=dict(self.directions))


def _require(data: dict[str, Any], key: str, kind: type, where: str) -> Any:
    if key not in data:
        raise GoldDataError(f"{where}.{key}: missing required field")
    value = data[key]
    if not isinstance(value, kind):
        raise GoldDataError(f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def load_gold(path: str | Path) -> GoldDataset:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise GoldDataError(f"cannot read gold dataset {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise GoldDataError(f"gold dataset {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise GoldDataError(f"{path}: expected a JSON object at the top level")
    where = "gold"

    papers_raw = _require(data, "papers", list, where)
    papers: list[str] = []
    for i, paper in enumerate(papers_raw):
        if not isinstance(paper, str) or not paper:
            raise GoldDataError(f"{where}.papers[{i}]: expected a non-empty string")
        papers.append(paper)
    if len(set(papers)) != len(papers):
        raise GoldDataError(f"{where}.papers: duplicate paper ids")

    taxonomy_raw = _require(data, "taxonomy", dict, where)
    taxonomy: dict[str, list[str]] = {}
    for entity_type in ENTITY_TYPES:
        names = _require(taxonomy_raw, entity_type, list, f"{where}.taxonomy")
        for i, name in enumerate(names):
            if not isinstance(name, str) or not name.strip():
                raise GoldDataError(f"{where}.taxonomy.{entity_type}[{i}]: expected a non-empty string")
        taxonomy[entity_type] = list(names)

    canon_names = {t: {canon(n) for n in taxonomy[t]} for t in ENTITY_TYPES}

    tuples_raw = _require(data, "tuples", dict, where)
    unknown_papers = sorted(set(tuples_raw) - set(papers))
    if unknown_papers:
        raise GoldDataError(f"{where}.tuples: papers not listed in {where}.papers: {unknown_papers}")
    tuples: dict[str, list[ResultTuple]] = {}
    for paper_id in papers:
        rows = tuples_raw.get(paper_id)
        if rows is None:
            raise GoldDataError(f"{where}.tuples.{paper_id}: missing tuple list")
        if not isinstance(rows, list):
            raise GoldDataError(f"{where}.tuples.{paper_id}: expected a list")
        parsed: list[ResultTuple] = []
        for i, row in enumerate(rows):
            row_where = f"{where}.tuples.{paper_id}[{i}]"
            if not isinstance(row, dict):
                raise GoldDataError(f"{row_where}: expected an object")
            names = {}
            for key in ("task", "dataset", "metric"):
                value = _require(row, key, str, row_where)
                if not value.strip():
                    raise GoldDataError(f"{row_where}.{key}: empty name")
                names[key] = value
                if canon(value) not in canon_names[key]:
                    raise GoldIntegrityError(
                        f"{row_where}.{key}: name {value!r} is not in the taxonomy"
                    )
            if "result" not in row:
                raise GoldDataError(f"{row_where}.result: missing required field")
            result = row["result"]
            if isinstance(result, bool) or not isinstance(result, (int, float)):
                raise GoldDataError(
                    f"{row_where}.result: expected a number, got {type(result).__name__}"
                )
            parsed.append(
                ResultTuple(
                    paper_id=paper_id,
                    task=names["task"],
                    dataset=names["dataset"],
                    metric=names["metric"],
                    result_raw=repr(float(result)) if isinstance(result, float) else str(result),
                    result_value=float(result),
                )
            )
        tuples[paper_id] = parsed

    directions: dict[str, str] = {}
    for i, row in enumerate(data.get("directions", [])):
        row_where = f"{where}.directions[{i}]"
        if not isinstance(row, dict):
            raise GoldDataError(f"{row_where}: expected an object")
        task = _require(row, "task", str, row_where)
        dataset = _require(row, "dataset", str, row_where)
        metric = _require(row, "metric", str, row_where)
        direction = _require(row, "direction", str, row_where)
        if direction not in (HIGHER, LOWER):
            raise GoldDataError(f"{row_where}.direction: expected higher or lower, got {direction!r}")
        directions[triple_key(task, dataset, metric)] = direction

    percentage_metrics: frozenset[str] | None = None
    if "percentage_metrics" in data:
        listed = _require(data, "percentage_metrics", list, where)
        for i, name in enumerate(listed):
            if not isinstance(name, str):
                raise GoldDataError(f"{where}.percentage_metrics[{i}]: expected a string")
        percentage_metrics = frozenset(canon(n) for n in listed)

    stats = data.get("stats")
    if stats is not None and not isinstance(stats, dict):
        raise GoldDataError(f"{where}.stats: expected an object")

    gold = GoldDataset(
        papers=papers,
        tuples=tuples,
        taxonomy=taxonomy,
        directions=directions,
        percentage_metrics=percentage_metrics,
        stats=stats,
    )
    if stats:
        _check_stats(gold)
    return gold


def dataset_statistics(gold: GoldDataset, threshold: int = DEFAULT_ENTRY_THRESHOLD) -> dict[str, Any]:
    """Counts derivable from the dataset itself."""
    all_tuples = gold.all_tuples()
    boards = derive_gold_leaderboards(gold, threshold=threshold)
    sizes = [len(board.entries) for board in boards]
    return {
        "papers": len(gold.papers),
        "unique_tasks": len({canon(t.task) for t in all_tuples}),
        "unique_datasets": len({canon(t.dataset) for t in all_tuples}),
        "unique_metrics": len({canon(t.metric) for t in all_tuples}),
        "unique_tdms": len({t.key() for t in all_tuples}),
        "tuples": len(all_tuples),
        "leaderboards": len(boards),
        "avg_papers_per_leaderboard": (sum(sizes) / len(sizes)) if sizes else 0.0,
    }


def _check_stats(gold: GoldDataset) -> None:
    assert gold.stats is not None
    derived = dataset_statistics(gold)
    for key, expected in gold.stats.items():
        if key not in derived:
            logger.warning("gold stats header has unknown key %r; skipping", key)
            continue
        actual = derived[key]
        if isinstance(expected, (int, float)) and not isinstance(expected, bool):
            if abs(float(expected) - float(actual)) > _STAT_TOLERANCE:
                raise GoldIntegrityError(
                    f"gold stats header says {key}={expected} but the data yields {actual}"
                )
        else:
            raise GoldIntegrityError(f"gold stats header {key}: expected a number")


def derive_gold_leaderboards(
    gold: GoldDataset, threshold: int = DEFAULT_ENTRY_THRESHOLD
) -> list[Leaderboard]:
    """Gold boards via the same builder predictions go through."""
    return build_leaderboards(
        gold.all_tuples(),
        threshold=threshold,
        directions=gold.direction_registry(),
        percentage_metrics=gold.percentage_metrics,
    )


def gold_record(gold: GoldDataset) -> dict[str, list[ResultTuple]]:
    return {paper_id: list(gold.tuples.get(paper_id, [])) for paper_id in gold.papers}


# -- run artifacts --------------------------------------------------------------


@dataclass
class RunArtifacts:
    config: dict[str, Any] | None = None
    extractions: dict[str, Any] | None = None
    normalization: dict[str, Any] | None = None
    leaderboards: dict[str, Any] | None = None
    eval_report: dict[str, Any] | None = None


_ARTIFACT_FILES = {
    "config": CONFIG_FILE,
    "extractions": EXTRACTIONS_FILE,
    "normalization": NORMALIZATION_FILE,
    "leaderboards": LEADERBOARDS_FILE,
    "eval_report": EVAL_REPORT_FILE,
}


def save_artifacts(run_dir: str | Path, artifacts: RunArtifacts) -> list[Path]:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name, filename in _ARTIFACT_FILES.items():
        payload = getattr(artifacts, name)
        if payload is None:
            continue
        path = run_dir / filename
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        written.append(path)
    return written


def load_artifacts(
    run_dir: str | Path,
    require: tuple[str, ...] = ("config", "extractions", "normalization", "leaderboards"),
) -> RunArtifacts:
    run_dir = Path(run_dir)
    for name in require:
        if name not in _ARTIFACT_FILES:
            raise ValueError(f"unknown artifact {name!r}")
    missing = [
        _ARTIFACT_FILES[name] for name in require if not (run_dir / _ARTIFACT_FILES[name]).exists()
    ]
    if missing:
        raise ArtifactError(f"run directory {run_dir} is missing artifacts: {', '.join(sorted(missing))}")
    artifacts = RunArtifacts()
    for name, filename in _ARTIFACT_FILES.items():
        path = run_dir / filename
        if not path.exists():
            continue
        try:
            setattr(artifacts, name, json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"artifact {path} is not valid JSON: {exc}") from exc
    return artifacts


def convert_external_gold(src: str | Path, out: str | Path) -> GoldDataset:
    """Rewrite an externally formatted annotation dump into the gold schema.

    Accepted shapes: the native schema itself; a mapping of paper id to a list
    of tuple objects; or a flat list of tuple objects that carry their paper id.
    Field names are matched case-insensitively with common aliases.
    """
    src = Path(src)
    try:
        data = json.loads(src.read_text(encoding="utf-8"))
    except OSError as exc:
        raise GoldDataError(f"cannot read {src}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise GoldDataError(f"{src} is not valid JSON: {exc}") from exc

    def pick(row: dict[str, Any], *aliases: str) -> Any:
        lowered = {str(k).strip().casefold(): v for k, v in row.items()}
        for alias in aliases:
            if alias in lowered:
                return lowered[alias]
        return None

    def to_rows(data: Any) -> dict[str, list[dict[str, Any]]]:
        grouped: dict[str, list[dict[str, Any]]] = {}
        if isinstance(data, dict):
            for paper_id, rows in data.items():
                if not isinstance(rows, list):
                    raise GoldDataError(
                        f"{src}: expected a list of tuples for paper {paper_id!r}"
                    )
                grouped[str(paper_id)] = [r for r in rows if isinstance(r, dict)]
            return grouped
        if isinstance(data, list):
            for i, row in enumerate(data):
                if not isinstance(row, dict):
                    raise GoldDataError(f"{src}[{i}]: expected an object")
                paper = pick(row, "paper_id", "paper", "arxiv_id", "paper name", "paper_name", "id")
                if paper is None:
                    raise GoldDataError(f"{src}[{i}]: no paper id field found")
                grouped.setdefault(str(paper), []).append(row)
            return grouped
        raise GoldDataError(f"{src}: unsupported top-level JSON shape {type(data).__name__}")

    if isinstance(data, dict) and {"papers", "taxonomy", "tuples"} <= set(data):
        native = data
    else:
        grouped = to_rows(data)
        papers = sorted(grouped)
        taxonomy: dict[str, list[str]] = {t: [] for t in ENTITY_TYPES}
        seen: dict[str, set[str]] = {t: set() for t in ENTITY_TYPES}
        tuples_out: dict[str, list[dict[str, Any]]] = {}
        for paper_id in papers:
            rows_out: list[dict[str, Any]] = []
            for row in grouped[paper_id]:
                task = pick(row, "task", "task name")
                dataset = pick(row, "dataset", "dataset name")
                metric = pick(row, "metric", "metric name")
                result = pick(row, "result", "score", "value", "result score")
                if not all(isinstance(v, str) and v.strip() for v in (task, dataset, metric)):
                    raise GoldDataError(
                        f"{src}: paper {paper_id}: tuple needs task/dataset/metric names: {row!r}"
                    )
                if isinstance(result, str):
                    try:
                        result = float(result.replace("%", "").strip())
                    except ValueError as exc:
                        raise GoldDataError(
                            f"{src}: paper {paper_id}: non-numeric result {result!r}"
                        ) from exc
                if isinstance(result, bool) or not isinstance(result, (int, float)):
                    raise GoldDataError(f"{src}: paper {paper_id}: no numeric result in {row!r}")
                for entity_type, name in (("task", task), ("dataset", dataset), ("metric", metric)):
                    if canon(name) not in seen[entity_type]:
                        seen[entity_type].add(canon(name))
                        taxonomy[entity_type].append(name)
                rows_out.append(
                    {"task": task, "dataset": dataset, "metric": metric, "result": result}
                )
            tuples_out[paper_id] = rows_out
        native = {"papers": papers, "taxonomy": taxonomy, "tuples": tuples_out}

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(native, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return load_gold(out)
