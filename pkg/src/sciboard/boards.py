"""Result canonicalization and leaderboard assembly.

Raw result strings become floats (or are excluded), fraction-valued scores on
percentage metrics are lifted onto the 0-100 scale, and canonical tuples are
grouped into per-(task, dataset, metric) boards ranked best-first.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .audit import AuditLog
from .errors import ConfigurationError, LeaderboardError
from .extraction import ResultTuple
from .textnorm import canon, triple_key

logger = logging.getLogger(__name__)

HIGHER = "higher"
LOWER = "lower"

DEFAULT_ENTRY_THRESHOLD = 3

# Metrics normally reported on a 0-100 scale; fraction-valued scores on these
# are treated as unscaled percentages.
DEFAULT_PERCENTAGE_METRICS = frozenset(
    canon(name)
    for name in (
        "F1",
        "F1 Score",
        "Macro F1",
        "Micro F1",
        "Accuracy",
        "Precision",
        "Recall",
        "Exact Match (EM)",
        "Exact Match",
        "EM",
        "BLEU",
        "ROUGE-1",
        "ROUGE-2",
        "ROUGE-L",
        "ROGUE-1",
        "ROGUE-2",
        "ROGUE-L",
        "METEOR",
        "LAS",
        "UAS",
        "Labeled Attachment Score (LAS)",
        "Unlabeled Attachment Score (UAS)",
    )
)

# Metrics where smaller is better; everything else defaults to higher-better.
LOWER_BETTER_METRICS = frozenset(
    canon(name)
    for name in (
        "Perplexity",
        "Word Error Rate (WER)",
        "WER",
        "Character Error Rate (CER)",
        "CER",
        "Translation Error Rate (TER)",
        "TER",
        "Error Rate",
        "Loss",
        "Cross-Entropy",
        "RMSE",
        "MAE",
        "MSE",
        "Root Mean Squared Error (RMSE)",
        "Mean Absolute Error (MAE)",
        "Mean Squared Error (MSE)",
    )
)
_LOWER_BETTER_HINTS = ("error rate", "perplexity", "loss")

_THOUSANDS = re.compile(r"(?<=\d),(?=\d)")

# Scores strictly inside this open-left interval are fractions to lift; the
# image (1, 100] is disjoint from it, which is what makes scaling idempotent.
_FRACTION_LOW = 0.01
_FRACTION_HIGH = 1.0


def clean_result(raw: str) -> float | None:
    """Numeric value of a raw result string, or None when there is none.

    Strips surrounding whitespace, a trailing percent sign, an uncertainty
    suffix after a plus-minus sign, and thousands separators.
    """
    text = raw.strip()
    if not text:
        return None
    text = text.split("±")[0].strip()
    if text.endswith("%"):
        text = text[:-1].strip()
    text = _THOUSANDS.sub("", text)
    try:
        return float(text)
    except ValueError:
        return None


def is_percentage_metric(metric: str, percentage_metrics: frozenset[str] | None = None) -> bool:
    pct = DEFAULT_PERCENTAGE_METRICS if percentage_metrics is None else percentage_metrics
    return canon(metric) in pct


def scale_result(value: float, metric: str, percentage_metrics: frozenset[str] | None = None) -> float:
    """Lift fraction-valued scores on percentage metrics onto the 0-100 scale.

    Only values in (0.01, 1] scale; the result lands in (1, 100], outside the
    scaling region, so applying this twice equals applying it once.
    """
    if is_percentage_metric(metric, percentage_metrics) and _FRACTION_LOW < value <= _FRACTION_HIGH:
        return value * 100.0
    return value


def canonical_value(
    result_raw: str, metric: str, percentage_metrics: frozenset[str] | None = None
) -> float | None:
    value = clean_result(result_raw)
    if value is None:
        return None
    return scale_result(value, metric, percentage_metrics)


def value_key(value: float) -> float:
    """Equality key for canonical values; collapses differences below 1e-9."""
    return round(value, 9)


@dataclass
class MetricDirectionRegistry:
    """Which direction wins a board: per-triple overrides, then per-metric
    overrides, then the shipped lower-better list, then higher-better."""

    metric_overrides: dict[str, str] = field(default_factory=dict)
    triple_overrides: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for direction in list(self.metric_overrides.values()) + list(self.triple_overrides.values()):
            if direction not in (HIGHER, LOWER):
                raise ConfigurationError(f"unknown direction {direction!r}")
        self.metric_overrides = {canon(k): v for k, v in self.metric_overrides.items()}

    def for_metric(self, metric: str) -> str:
        key = canon(metric)
        if key in self.metric_overrides:
            return self.metric_overrides[key]
        if key in LOWER_BETTER_METRICS:
            return LOWER
        if any(hint in key for hint in _LOWER_BETTER_HINTS):
            return LOWER
        return HIGHER

    def for_board(self, task: str, dataset: str, metric: str) -> str:
        key = triple_key(task, dataset, metric)
        if key in self.triple_overrides:
            return self.triple_overrides[key]
        return self.for_metric(metric)


@dataclass(frozen=True)
class BoardEntry:
    paper_id: str
    value: float


@dataclass(frozen=True)
class Leaderboard:
    task: str
    dataset: str
    metric: str
    direction: str
    entries: tuple[BoardEntry, ...]

    def key(self) -> str:
        return triple_key(self.task, self.dataset, self.metric)

    def ranking(self) -> list[str]:
        return [entry.paper_id for entry in self.entries]

    def to_json(self) -> dict[str, Any]:
        return {
            "task": self.task,
            "dataset": self.dataset,
            "metric": self.metric,
            "direction": self.direction,
            "entries": [{"paper_id": e.paper_id, "value": e.value} for e in self.entries],
        }

    @staticmethod
    def from_json(data: dict[str, Any]) -> "Leaderboard":
        return Leaderboard(
            task=str(data["task"]),
            dataset=str(data["dataset"]),
            metric=str(data["metric"]),
            direction=str(data["direction"]),
            entries=tuple(
                BoardEntry(paper_id=str(e["paper_id"]), value=float(e["value"]))
                for e in data["entries"]
            ),
        )


def _validate_boards(boards: list[Leaderboard], threshold: int) -> None:
    for board in boards:
        label = f"board ({board.task}, {board.dataset}, {board.metric})"
        if len(board.entries) < threshold:
            raise LeaderboardError(f"{label} has {len(board.entries)} entries, below threshold {threshold}")
        papers = [entry.paper_id for entry in board.entries]
        if len(set(papers)) != len(papers):
            raise LeaderboardError(f"{label} lists a paper more than once")
        for earlier, later in zip(board.entries, board.entries[1:]):
            if board.direction == HIGHER:
                ordered = earlier.value > later.value or (
                    earlier.value == later.value and earlier.paper_id < later.paper_id
                )
            else:
                ordered = earlier.value < later.value or (
                    earlier.value == later.value and earlier.paper_id < later.paper_id
                )
            if not ordered:
                raise LeaderboardError(f"{label} is not sorted best-first")


def build_leaderboards(
    tuples: Iterable[ResultTuple],
    threshold: int = DEFAULT_ENTRY_THRESHOLD,
    directions: MetricDirectionRegistry | None = None,
    percentage_metrics: frozenset[str] | None = None,
    audit: AuditLog | None = None,
) -> list[Leaderboard]:
    """Group canonical tuples into ranked boards.

    Values are recomputed from `result_raw` against each tuple's (possibly
    renamed) metric. Papers keep only their best value per board. Boards with
    fewer than `threshold` entries are dropped and audited.
    """
    if threshold < 1:
        raise ConfigurationError(f"threshold must be positive, got {threshold}")
    directions = directions or MetricDirectionRegistry()
    audit = audit if audit is not None else AuditLog()

    groups: dict[str, dict[str, Any]] = {}
    for t in tuples:
        value = canonical_value(t.result_raw, t.metric, percentage_metrics)
        if value is None:
            audit.add(
                "boards",
                "non-numeric result excluded",
                f"({t.task}, {t.dataset}, {t.metric}) result {t.result_raw!r}",
                t.paper_id,
            )
            continue
        key = t.key()
        group = groups.setdefault(
            key, {"names": (t.task, t.dataset, t.metric), "by_paper": {}}
        )
        direction = directions.for_board(*group["names"])
        current = group["by_paper"].get(t.paper_id)
        if current is None:
            group["by_paper"][t.paper_id] = value
        else:
            better = value > current if direction == HIGHER else value < current
            kept, dropped = (value, current) if better else (current, value)
            group["by_paper"][t.paper_id] = kept
            audit.add(
                "boards",
                "duplicate paper entry discarded",
                f"kept {kept} over {dropped} on ({t.task}, {t.dataset}, {t.metric})",
                t.paper_id,
            )

    boards: list[Leaderboard] = []
    for key in sorted(groups):
        group = groups[key]
        task, dataset, metric = group["names"]
        direction = directions.for_board(task, dataset, metric)
        by_paper: dict[str, float] = group["by_paper"]
        if len(by_paper) < threshold:
            audit.add(
                "boards",
                "board below entry threshold",
                f"({task}, {dataset}, {metric}) has {len(by_paper)} entries, needs {threshold}",
            )
            continue
        reverse = direction == HIGHER
        entries = tuple(
            BoardEntry(paper_id=paper, value=value)
            for paper, value in sorted(
                by_paper.items(),
                key=lambda item: ((-item[1] if reverse else item[1]), item[0]),
            )
        )
        boards.append(
            Leaderboard(task=task, dataset=dataset, metric=metric, direction=direction, entries=entries)
        )
    _validate_boards(boards, threshold)
    return boards


def render_leaderboards(boards: list[Leaderboard], out_dir: str | Path) -> tuple[Path, Path]:
    """Write leaderboards.json and leaderboards.md; empty input yields an
    empty-but-valid pair."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "leaderboards.json"
    md_path = out_dir / "leaderboards.md"
    json_path.write_text(
        json.dumps({"boards": [board.to_json() for board in boards]}, indent=2, ensure_ascii=False)
        + "\n",
        encoding="utf-8",
    )
    lines: list[str] = ["# Leaderboards", ""]
    if not boards:
        lines.append("No boards cleared the entry threshold.")
    for board in boards:
        arrow = "higher is better" if board.direction == HIGHER else "lower is better"
        lines.append(f"## {board.task} | {board.dataset} | {board.metric}")
        lines.append("")
        lines.append(f"_{arrow}_")
        lines.append("")
        lines.append("| rank | paper | value |")
        lines.append("| --- | --- | --- |")
        for rank, entry in enumerate(board.entries, start=1):
            lines.append(f"| {rank} | {entry.paper_id} | {entry.value:g} |")
        lines.append("")
    md_path.write_text("\n".join(lines).rstrip() + "\n", encoding="utf-8")
    return json_path, md_path


def boards_from_json(data: dict[str, Any]) -> list[Leaderboard]:
    return [Leaderboard.from_json(item) for item in data.get("boards", [])]
