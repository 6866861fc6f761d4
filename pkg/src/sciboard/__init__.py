"""Leaderboard reconstruction from research-paper bundles."""

from __future__ import annotations

__version__ = "0.1.0"

from .boards import Leaderboard, build_leaderboards, clean_result, scale_result
from .bundles import DocumentBundle, load_bundle, load_bundles
from .evaluation import average_overlap, exact_tuple_match, item_match, leaderboard_scores
from .extraction import ResultTuple, build_extraction_prompt, dedupe_best, parse_tuples
from .gateway import ChatRequest, Decoding, LlmGateway
from .goldstore import GoldDataset, derive_gold_leaderboards, load_gold
from .normalization import (
    Taxonomy,
    build_masking_plan,
    normalize_entity_dynamic,
    normalize_entity_fixed,
    run_corpus_normalization,
)

__all__ = [
    "ChatRequest",
    "Decoding",
    "DocumentBundle",
    "GoldDataset",
    "Leaderboard",
    "LlmGateway",
    "ResultTuple",
    "Taxonomy",
    "average_overlap",
    "build_extraction_prompt",
    "build_leaderboards",
    "build_masking_plan",
    "clean_result",
    "dedupe_best",
    "derive_gold_leaderboards",
    "exact_tuple_match",
    "item_match",
    "leaderboard_scores",
    "load_bundle",
    "load_bundles",
    "load_gold",
    "normalize_entity_dynamic",
    "normalize_entity_fixed",
    "parse_tuples",
    "run_corpus_normalization",
    "scale_result",
]
