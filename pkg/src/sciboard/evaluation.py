"""Scoring a reconstructed corpus against gold.

Tuple-level scores (exact tuple match, per-item match) macro-average per-paper
set precision and recall. Board-level scores cover how many gold boards were
produced, how much of each board's papers and results were recovered, and how
well the rankings agree (average overlap).
"""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .boards import BoardEntry, Leaderboard, canonical_value, value_key
from .errors import GoldIntegrityError
from .extraction import ResultTuple
from .textnorm import canon

logger = logging.getLogger(__name__)

ITEM_TYPES = ("task", "dataset", "metric", "result")


@dataclass(frozen=True)
class MatchScores:
    recall: float
    precision: float
    f1: float

    def to_json(self) -> dict[str, float]:
        return {"recall": self.recall, "precision": self.precision, "f1": self.f1}

    @staticmethod
    def from_json(data: Mapping[str, float]) -> "MatchScores":
        return MatchScores(
            recall=float(data["recall"]), precision=float(data["precision"]), f1=float(data["f1"])
        )


def _result_part(t: ResultTuple, percentage_metrics: frozenset[str] | None) -> tuple[str, Any]:
    value = canonical_value(t.result_raw, t.metric, percentage_metrics)
    if value is None:
        return ("raw", canon(t.result_raw))
    return ("num", value_key(value))


def tuple_match_key(t: ResultTuple, percentage_metrics: frozenset[str] | None = None) -> tuple:
    """Equality key: canonical names plus the canonical result value."""
    return (
        canon(t.task),
        canon(t.dataset),
        canon(t.metric),
        _result_part(t, percentage_metrics),
    )


def _f1(recall: float, precision: float) -> float:
    if recall + precision == 0.0:
        return 0.0
    return 2.0 * recall * precision / (recall + precision)


def _validate_papers(
    gold: Mapping[str, Sequence[ResultTuple]], pred: Mapping[str, Sequence[ResultTuple]]
) -> list[str]:
    papers = sorted(gold)
    if not papers:
        raise GoldIntegrityError("gold record has no papers")
    for paper_id in papers:
        if not gold[paper_id]:
            raise GoldIntegrityError(f"gold record lists paper {paper_id} with no tuples")
    extras = sorted(set(pred) - set(gold))
    if extras:
        logger.warning("predictions cover papers outside the gold set, ignoring: %s", extras)
    return papers


def _macro_scores(gold_sets: dict[str, set], pred_sets: dict[str, set]) -> MatchScores:
    recalls: list[float] = []
    precisions: list[float] = []
    for paper_id, gold_set in gold_sets.items():
        pred_set = pred_sets.get(paper_id, set())
        hits = len(gold_set & pred_set)
        recalls.append(hits / len(gold_set))
        precisions.append(hits / len(pred_set) if pred_set else 0.0)
    recall = sum(recalls) / len(recalls)
    precision = sum(precisions) / len(precisions)
    return MatchScores(recall=recall, precision=precision, f1=_f1(recall, precision))


def exact_tuple_match(
    gold: Mapping[str, Sequence[ResultTuple]],
    pred: Mapping[str, Sequence[ResultTuple]],
    percentage_metrics: frozenset[str] | None = None,
) -> MatchScores:
    """Macro-averaged per-paper precision/recall over whole-tuple equality."""
    papers = _validate_papers(gold, pred)
    gold_sets = {p: {tuple_match_key(t, percentage_metrics) for t in gold[p]} for p in papers}
    pred_sets = {p: {tuple_match_key(t, percentage_metrics) for t in pred.get(p, ())} for p in papers}
    return _macro_scores(gold_sets, pred_sets)


def _item_key(t: ResultTuple, item_type: str, percentage_metrics: frozenset[str] | None) -> Any:
    if item_type == "task":
        return canon(t.task)
    if item_type == "dataset":
        return canon(t.dataset)
    if item_type == "metric":
        return canon(t.metric)
    return _result_part(t, percentage_metrics)


def item_match(
    gold: Mapping[str, Sequence[ResultTuple]],
    pred: Mapping[str, Sequence[ResultTuple]],
    item_type: str,
    percentage_metrics: frozenset[str] | None = None,
) -> MatchScores:
    """Macro-averaged per-paper precision/recall over one field's unique items."""
    if item_type not in ITEM_TYPES:
        raise ValueError(f"unknown item type {item_type!r}")
    papers = _validate_papers(gold, pred)
    gold_sets = {
        p: {_item_key(t, item_type, percentage_metrics) for t in gold[p]} for p in papers
    }
    pred_sets = {
        p: {_item_key(t, item_type, percentage_metrics) for t in pred.get(p, ())} for p in papers
    }
    return _macro_scores(gold_sets, pred_sets)


def average_overlap(gold_ranking: Sequence[str], pred_ranking: Sequence[str]) -> float:
    """Mean prefix agreement of two duplicate-free rankings, over depths
    1..min(len(gold), len(pred))."""
    if not gold_ranking or not pred_ranking:
        raise ValueError("average overlap is undefined for an empty ranking")
    if len(set(gold_ranking)) != len(gold_ranking) or len(set(pred_ranking)) != len(pred_ranking):
        raise ValueError("rankings must be duplicate-free")
    depth_limit = min(len(gold_ranking), len(pred_ranking))
    seen_gold: set[str] = set()
    seen_pred: set[str] = set()
    overlap = 0
    total = 0.0
    for depth in range(depth_limit):
        a, b = gold_ranking[depth], pred_ranking[depth]
        if a == b:
            overlap += 1
        else:
            if a in seen_pred:
                overlap += 1
            if b in seen_gold:
                overlap += 1
            seen_gold.add(a)
            seen_pred.add(b)
        total += overlap / (depth + 1)
    return total / depth_limit


def _merge_duplicate_boards(boards: Sequence[Leaderboard]) -> dict[str, Leaderboard]:
    merged: dict[str, Leaderboard] = {}
    for board in boards:
        key = board.key()
        if key not in merged:
            merged[key] = board
            continue
        logger.warning(
            "duplicate predicted board (%s, %s, %s); merging entries",
            board.task,
            board.dataset,
            board.metric,
        )
        existing = merged[key]
        by_paper: dict[str, float] = {}
        for entry in list(existing.entries) + list(board.entries):
            current = by_paper.get(entry.paper_id)
            if current is None:
                by_paper[entry.paper_id] = entry.value
            else:
                better = entry.value > current if existing.direction == "higher" else entry.value < current
                if better:
                    by_paper[entry.paper_id] = entry.value
        reverse = existing.direction == "higher"
        entries = tuple(
            BoardEntry(paper_id=p, value=v)
            for p, v in sorted(
                by_paper.items(), key=lambda item: ((-item[1] if reverse else item[1]), item[0])
            )
        )
        merged[key] = Leaderboard(
            task=existing.task,
            dataset=existing.dataset,
            metric=existing.metric,
            direction=existing.direction,
            entries=entries,
        )
    return merged


@dataclass(frozen=True)
class BoardScore:
    task: str
    dataset: str
    metric: str
    matched: bool
    paper_ratio: float
    result_ratio: float
    overlap: float

    def to_json(self) -> dict[str, Any]:
        return {
            "task": self.task,
            "dataset": self.dataset,
            "metric": self.metric,
            "matched": self.matched,
            "paper_ratio": self.paper_ratio,
            "result_ratio": self.result_ratio,
            "overlap": self.overlap,
        }


@dataclass(frozen=True)
class BoardMetrics:
    board_recall: float
    paper_coverage: float
    result_coverage: float
    ranking_overlap: float
    per_board: tuple[BoardScore, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "board_recall": self.board_recall,
            "paper_coverage": self.paper_coverage,
            "result_coverage": self.result_coverage,
            "ranking_overlap": self.ranking_overlap,
            "per_board": [score.to_json() for score in self.per_board],
        }


def leaderboard_scores(
    gold_boards: Sequence[Leaderboard], pred_boards: Sequence[Leaderboard]
) -> BoardMetrics:
    """Board recall plus macro paper coverage, result coverage, and ranking
    overlap over gold boards; a gold board with no predicted counterpart
    contributes zeros."""
    if not gold_boards:
        raise GoldIntegrityError("no gold boards to evaluate against")
    pred_by_key = _merge_duplicate_boards(pred_boards)
    scores: list[BoardScore] = []
    for gold_board in gold_boards:
        pred_board = pred_by_key.get(gold_board.key())
        if pred_board is None:
            scores.append(
                BoardScore(
                    task=gold_board.task,
                    dataset=gold_board.dataset,
                    metric=gold_board.metric,
                    matched=False,
                    paper_ratio=0.0,
                    result_ratio=0.0,
                    overlap=0.0,
                )
            )
            continue
        gold_values = {entry.paper_id: value_key(entry.value) for entry in gold_board.entries}
        pred_values = {entry.paper_id: value_key(entry.value) for entry in pred_board.entries}
        shared = set(gold_values) & set(pred_values)
        paper_ratio = len(shared) / len(gold_values)
        result_hits = sum(1 for paper in shared if gold_values[paper] == pred_values[paper])
        result_ratio = result_hits / len(gold_values)
        assert result_ratio <= paper_ratio + 1e-12
        scores.append(
            BoardScore(
                task=gold_board.task,
                dataset=gold_board.dataset,
                metric=gold_board.metric,
                matched=True,
                paper_ratio=paper_ratio,
                result_ratio=result_ratio,
                overlap=average_overlap(gold_board.ranking(), pred_board.ranking()),
            )
        )
    count = len(scores)
    return BoardMetrics(
        board_recall=sum(1 for s in scores if s.matched) / count,
        paper_coverage=sum(s.paper_ratio for s in scores) / count,
        result_coverage=sum(s.result_ratio for s in scores) / count,
        ranking_overlap=sum(s.overlap for s in scores) / count,
        per_board=tuple(scores),
    )


@dataclass
class EvalReport:
    exact_tuple: MatchScores
    items: dict[str, MatchScores]
    boards: BoardMetrics
    meta: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "exact_tuple": self.exact_tuple.to_json(),
            "items": {k: v.to_json() for k, v in self.items.items()},
            "boards": self.boards.to_json(),
            "meta": self.meta,
        }

    def flat_metrics(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for name, scores in [("exact_tuple", self.exact_tuple)] + sorted(self.items.items()):
            out[f"{name}.recall"] = scores.recall
            out[f"{name}.precision"] = scores.precision
            out[f"{name}.f1"] = scores.f1
        out["board_recall"] = self.boards.board_recall
        out["paper_coverage"] = self.boards.paper_coverage
        out["result_coverage"] = self.boards.result_coverage
        out["ranking_overlap"] = self.boards.ranking_overlap
        return out

    def render_text(self) -> str:
        def pct(x: float) -> str:
            return f"{100.0 * x:7.2f}"

        lines = [f"{'':24}  recall  precis.      f1"]
        lines.append(f"{'exact tuple match':24} {pct(self.exact_tuple.recall)} {pct(self.exact_tuple.precision)} {pct(self.exact_tuple.f1)}")
        for item_type in ITEM_TYPES:
            scores = self.items[item_type]
            lines.append(
                f"{'item match: ' + item_type:24} {pct(scores.recall)} {pct(scores.precision)} {pct(scores.f1)}"
            )
        lines.append("")
        lines.append(f"{'leaderboard recall':24} {pct(self.boards.board_recall)}")
        lines.append(f"{'paper coverage':24} {pct(self.boards.paper_coverage)}")
        lines.append(f"{'result coverage':24} {pct(self.boards.result_coverage)}")
        lines.append(f"{'ranking overlap':24} {pct(self.boards.ranking_overlap)}")
        return "\n".join(lines)


def evaluate_run(
    gold_tuples: Mapping[str, Sequence[ResultTuple]],
    gold_boards: Sequence[Leaderboard],
    pred_tuples: Mapping[str, Sequence[ResultTuple]],
    pred_boards: Sequence[Leaderboard],
    percentage_metrics: frozenset[str] | None = None,
    meta: dict[str, Any] | None = None,
) -> EvalReport:
    return EvalReport(
        exact_tuple=exact_tuple_match(gold_tuples, pred_tuples, percentage_metrics),
        items={
            item_type: item_match(gold_tuples, pred_tuples, item_type, percentage_metrics)
            for item_type in ITEM_TYPES
        },
        boards=leaderboard_scores(gold_boards, pred_boards),
        meta=dict(meta or {}),
    )


def aggregate_runs(reports: Sequence[EvalReport]) -> dict[str, Any]:
    """Sample mean and standard deviation of every metric across runs."""
    if not reports:
        raise ValueError("no reports to aggregate")
    if len(reports) == 1:
        logger.warning("aggregating a single run: standard deviations are zero by convention")
    flats = [report.flat_metrics() for report in reports]
    names = list(flats[0])
    aggregate: dict[str, Any] = {"runs": len(reports), "metrics": {}}
    for name in names:
        values = [flat[name] for flat in flats]
        mean = sum(values) / len(values)
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        aggregate["metrics"][name] = {
            "mean": mean,
            "std": std,
            "display": f"{100.0 * mean:.2f} ± {100.0 * std:.2f}",
        }
    return aggregate
