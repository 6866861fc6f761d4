"""Entity normalization against a taxonomy, in three regimes.

With a fully pre-defined taxonomy every mention must match a known name or
its tuple is discarded. With a partial taxonomy (some names masked) or a cold
start (no names at all), non-matching mentions grow the working set, so the
taxonomy is discovered while normalizing. A trailing triple-level pass can
align whole (task, dataset, metric) triples with a reference set.

Mentions identical to a known name (case/whitespace-insensitive) are resolved
locally; the model is only consulted for the rest.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np

from .audit import AuditLog
from .corpus import EmbedLike, _embed_fn
from .errors import ConfigurationError
from .extraction import ResultTuple
from .gateway import ChatRequest, Decoding, LlmGateway
from .textnorm import canon, find_canonical

logger = logging.getLogger(__name__)

ENTITY_TYPES = ("task", "dataset", "metric")

FULLY = "fully"
PARTIAL = "partial"
COLD = "cold"
SETTINGS = (FULLY, PARTIAL, COLD)

MAPPED = "mapped"
ADDED = "added"
UNMATCHED = "unmatched"

MATCH_EXACT = "exact"
MATCH_LLM = "llm"
MATCH_COSINE = "cosine"

DEFAULT_COSINE_THRESHOLD = 0.5

CLOSED_MATCH_PROMPT = (
    "You will be given a list of items. Then, an input will be provided. You will "
    "match the input with one of the items in the list. Your answer will ONLY consist "
    "of the matched item in the list, do not provide further explanations. If none of "
    "the items matches, say None."
)

OPEN_MATCH_PROMPT = (
    "You will be given a list of items. Then, an input entity will be provided. If the "
    "input entity matches one of the items in the list, your answer will be the matched "
    "item in the list. Else, output the entity without changing it. DO NOT make any "
    "other explanation."
)

TRIPLE_MATCH_PROMPT = (
    "You will be given a list of tuples. Then, an input tuple will be provided. If the "
    "input tuple matches one of the items in the list, your answer will be the matched "
    "item in the list. Else, output the tuple without changing it. Only output answer, "
    "DO NOT make any other explanation."
)


def _item_list(names: Sequence[str]) -> str:
    return "{" + ", ".join(f"'{name}'" for name in names) + "}"


def _entity_user_content(names: Sequence[str], mention: str) -> str:
    return f"Item list: {_item_list(names)}\nInput: {mention}"


def render_triple(triple: tuple[str, str, str]) -> str:
    return f"({triple[0]}, {triple[1]}, {triple[2]})"


def _triple_user_content(references: Sequence[tuple[str, str, str]], triple: tuple[str, str, str]) -> str:
    listed = "{" + ", ".join(render_triple(ref) for ref in references) + "}"
    return f"Item list: {listed}\nInput: {render_triple(triple)}"


@dataclass
class Taxonomy:
    """Known entity names per type: the pre-defined lists, the masked names
    withheld from them, and the working set that normalization grows."""

    predefined: dict[str, list[str]]
    masked: dict[str, set[str]]
    working: dict[str, list[str]]
    gold_triples: list[tuple[str, str, str]] = field(default_factory=list)

    @staticmethod
    def build(
        predefined: dict[str, Iterable[str]],
        mask: dict[str, Iterable[str]] | None = None,
        gold_triples: Iterable[tuple[str, str, str]] = (),
    ) -> "Taxonomy":
        mask = mask or {}
        for key in list(predefined) + list(mask):
            if key not in ENTITY_TYPES:
                raise ConfigurationError(f"unknown entity type {key!r}")
        clean_pre: dict[str, list[str]] = {}
        clean_mask: dict[str, set[str]] = {}
        working: dict[str, list[str]] = {}
        for entity_type in ENTITY_TYPES:
            names: list[str] = []
            seen: set[str] = set()
            for name in predefined.get(entity_type, ()):
                key = canon(name)
                if key not in seen:
                    seen.add(key)
                    names.append(name)
            masked_names = {canon(name) for name in (mask.get(entity_type) or ())}
            unknown = masked_names - seen
            if unknown:
                raise ConfigurationError(
                    f"mask for {entity_type} names unknown entries: {sorted(unknown)}"
                )
            clean_pre[entity_type] = names
            clean_mask[entity_type] = {n for n in names if canon(n) in masked_names}
            working[entity_type] = [n for n in names if canon(n) not in masked_names]
        return Taxonomy(
            predefined=clean_pre,
            masked=clean_mask,
            working=working,
            gold_triples=list(gold_triples),
        )

    @staticmethod
    def for_setting(
        predefined: dict[str, Iterable[str]],
        setting: str,
        mask: dict[str, Iterable[str]] | None = None,
        gold_triples: Iterable[tuple[str, str, str]] = (),
    ) -> "Taxonomy":
        if setting not in SETTINGS:
            raise ConfigurationError(f"unknown setting {setting!r}")
        if setting == FULLY:
            if mask and any(mask.get(t) for t in ENTITY_TYPES):
                raise ConfigurationError("the fully pre-defined setting admits no mask")
            mask = None
        elif setting == COLD:
            # cold start withholds everything; the working sets begin empty
            mask = {t: list(predefined.get(t, ())) for t in ENTITY_TYPES}
        return Taxonomy.build(predefined, mask=mask, gold_triples=gold_triples)

    def lookup(self, entity_type: str, mention: str) -> str | None:
        return find_canonical(mention, self.working[entity_type])

    def add(self, entity_type: str, name: str) -> str:
        """Add `name` to the working set unless an equivalent member exists;
        returns the member surface that now covers it."""
        existing = self.lookup(entity_type, name)
        if existing is not None:
            return existing
        self.working[entity_type].append(name)
        return name

    def sizes(self) -> dict[str, int]:
        return {t: len(self.working[t]) for t in ENTITY_TYPES}


@dataclass(frozen=True)
class NormDecision:
    entity_type: str
    mention: str
    outcome: str  # mapped | added | unmatched
    name: str | None
    matcher: str  # exact | llm | cosine
    paper_id: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "entity_type": self.entity_type,
            "mention": self.mention,
            "outcome": self.outcome,
            "name": self.name,
            "matcher": self.matcher,
            "paper_id": self.paper_id,
        }


def normalize_entity_fixed(
    mention: str,
    taxonomy: Taxonomy,
    entity_type: str,
    gateway: LlmGateway,
    paper_id: str | None = None,
) -> NormDecision:
    """Match a mention against a closed list; no match means unmatched."""
    if entity_type not in ENTITY_TYPES:
        raise ConfigurationError(f"unknown entity type {entity_type!r}")
    if taxonomy.masked.get(entity_type):
        raise ConfigurationError(f"closed matching requires an unmasked {entity_type} list")
    names = taxonomy.working[entity_type]
    if not names:
        raise ConfigurationError(f"no known {entity_type} names to match against")
    exact = taxonomy.lookup(entity_type, mention)
    if exact is not None:
        return NormDecision(entity_type, mention, MAPPED, exact, MATCH_EXACT, paper_id)
    response = gateway.complete(
        ChatRequest(
            system_prompt=CLOSED_MATCH_PROMPT,
            user_content=_entity_user_content(names, mention),
        )
    ).strip()
    if canon(response) == "none":
        return NormDecision(entity_type, mention, UNMATCHED, None, MATCH_LLM, paper_id)
    member = find_canonical(response, names)
    if member is None:
        logger.warning(
            "closed match for %r returned non-member %r; treating as unmatched", mention, response
        )
        return NormDecision(entity_type, mention, UNMATCHED, None, MATCH_LLM, paper_id)
    return NormDecision(entity_type, mention, MAPPED, member, MATCH_LLM, paper_id)


def normalize_entity_dynamic(
    mention: str,
    taxonomy: Taxonomy,
    entity_type: str,
    gateway: LlmGateway,
    paper_id: str | None = None,
) -> NormDecision:
    """Match a mention against the working set, adding it (or the model's
    rewording of it) as a new member when nothing matches."""
    if entity_type not in ENTITY_TYPES:
        raise ConfigurationError(f"unknown entity type {entity_type!r}")
    exact = taxonomy.lookup(entity_type, mention)
    if exact is not None:
        return NormDecision(entity_type, mention, MAPPED, exact, MATCH_EXACT, paper_id)
    names = taxonomy.working[entity_type]
    response = gateway.complete(
        ChatRequest(
            system_prompt=OPEN_MATCH_PROMPT,
            user_content=_entity_user_content(names, mention),
        )
    ).strip()
    if not response:
        logger.warning("open match for %r returned empty text; keeping the mention", mention)
        added = taxonomy.add(entity_type, mention)
        return NormDecision(entity_type, mention, ADDED, added, MATCH_LLM, paper_id)
    member = find_canonical(response, names)
    if member is not None:
        return NormDecision(entity_type, mention, MAPPED, member, MATCH_LLM, paper_id)
    added = taxonomy.add(entity_type, response)
    return NormDecision(entity_type, mention, ADDED, added, MATCH_LLM, paper_id)


def cosine_match_baseline(
    mention: str,
    taxonomy: Taxonomy,
    entity_type: str,
    embedder: EmbedLike,
    threshold: float = DEFAULT_COSINE_THRESHOLD,
    paper_id: str | None = None,
) -> NormDecision:
    """Closed-list matching by embedding similarity instead of a chat model."""
    if entity_type not in ENTITY_TYPES:
        raise ConfigurationError(f"unknown entity type {entity_type!r}")
    names = taxonomy.working[entity_type]
    if not names:
        raise ConfigurationError(f"no known {entity_type} names to match against")
    vectors = np.asarray(_embed_fn(embedder)([mention] + list(names)), dtype=np.float64)
    mention_vec = vectors[0]
    name_vecs = vectors[1:]
    norms = np.linalg.norm(name_vecs, axis=1) * np.linalg.norm(mention_vec)
    sims = np.zeros(len(names))
    valid = norms > 0.0
    sims[valid] = (name_vecs @ mention_vec)[valid] / norms[valid]
    best = int(np.argmax(sims))
    if sims[best] >= threshold:
        return NormDecision(entity_type, mention, MAPPED, names[best], MATCH_COSINE, paper_id)
    return NormDecision(entity_type, mention, UNMATCHED, None, MATCH_COSINE, paper_id)


@dataclass
class NormalizationResult:
    setting: str
    tuples: list[ResultTuple]
    taxonomy: Taxonomy
    decisions: list[NormDecision]
    dispositions: list[dict[str, Any]]
    second_pass: dict[str, str] = field(default_factory=dict)
    second_pass_applied: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "setting": self.setting,
            "taxonomy": {t: list(self.taxonomy.working[t]) for t in ENTITY_TYPES},
            "masked": {t: sorted(self.taxonomy.masked[t]) for t in ENTITY_TYPES},
            "decisions": [d.to_json() for d in self.decisions],
            "dispositions": self.dispositions,
            "tuples": [t.to_json() for t in self.tuples],
            "second_pass": {"applied": self.second_pass_applied, "mapping": self.second_pass},
        }


def run_corpus_normalization(
    tuples_by_paper: dict[str, list[ResultTuple]],
    taxonomy: Taxonomy,
    setting: str,
    paper_order: Sequence[str],
    gateway: LlmGateway,
    matcher: str = MATCH_LLM,
    cosine_threshold: float = DEFAULT_COSINE_THRESHOLD,
    audit: AuditLog | None = None,
) -> NormalizationResult:
    """Normalize every extracted tuple, visiting papers in `paper_order` and a
    paper's tuples in extraction order, entities in task, dataset, metric order.

    Fully pre-defined: unmatched entities discard their whole tuple.
    Partial / cold: the working set grows instead; nothing is discarded.
    """
    if setting not in SETTINGS:
        raise ConfigurationError(f"unknown setting {setting!r}")
    if sorted(paper_order) != sorted(tuples_by_paper):
        raise ConfigurationError("paper_order must be a permutation of the papers with tuples")
    if matcher not in (MATCH_LLM, MATCH_COSINE):
        raise ConfigurationError(f"unknown matcher {matcher!r}")
    if matcher == MATCH_COSINE and setting != FULLY:
        raise ConfigurationError("the cosine baseline only applies to the fully pre-defined setting")
    if setting == FULLY and any(taxonomy.masked[t] for t in ENTITY_TYPES):
        raise ConfigurationError("the fully pre-defined setting admits no mask")
    if setting == COLD and any(taxonomy.working[t] for t in ENTITY_TYPES):
        raise ConfigurationError("cold start must begin from empty working sets")
    audit = audit if audit is not None else AuditLog()

    decisions: list[NormDecision] = []
    dispositions: list[dict[str, Any]] = []
    kept: list[ResultTuple] = []
    for paper_id in paper_order:
        for t in tuples_by_paper[paper_id]:
            per_entity: dict[str, NormDecision] = {}
            for entity_type, mention in (
                ("task", t.task),
                ("dataset", t.dataset),
                ("metric", t.metric),
            ):
                if setting == FULLY:
                    if matcher == MATCH_COSINE:
                        decision = cosine_match_baseline(
                            mention, taxonomy, entity_type, gateway,
                            threshold=cosine_threshold, paper_id=paper_id,
                        )
                    else:
                        decision = normalize_entity_fixed(
                            mention, taxonomy, entity_type, gateway, paper_id=paper_id
                        )
                else:
                    decision = normalize_entity_dynamic(
                        mention, taxonomy, entity_type, gateway, paper_id=paper_id
                    )
                per_entity[entity_type] = decision
                decisions.append(decision)
            unmatched = [et for et, d in per_entity.items() if d.outcome == UNMATCHED]
            record: dict[str, Any] = {
                "paper_id": paper_id,
                "task": t.task,
                "dataset": t.dataset,
                "metric": t.metric,
                "result_raw": t.result_raw,
            }
            if unmatched:
                reason = "unmatched " + ", ".join(
                    f"{et} {per_entity[et].mention!r}" for et in unmatched
                )
                record.update({"disposition": "discarded", "reason": reason})
                audit.add("normalization", "tuple discarded", reason, paper_id)
            else:
                record.update({"disposition": "kept", "reason": ""})
                kept.append(
                    replace(
                        t,
                        task=per_entity["task"].name or t.task,
                        dataset=per_entity["dataset"].name or t.dataset,
                        metric=per_entity["metric"].name or t.metric,
                    )
                )
            dispositions.append(record)
    return NormalizationResult(
        setting=setting,
        tuples=kept,
        taxonomy=taxonomy,
        decisions=decisions,
        dispositions=dispositions,
    )


def normalize_triples_second_pass(
    triples: Sequence[tuple[str, str, str]],
    reference_triples: Sequence[tuple[str, str, str]],
    gateway: LlmGateway,
    audit: AuditLog | None = None,
) -> dict[tuple[str, str, str], tuple[str, str, str]]:
    """Map each distinct triple onto a reference triple when the model says they
    match; anything else passes through unchanged."""
    audit = audit if audit is not None else AuditLog()
    by_key: dict[str, tuple[str, str, str]] = {}
    for ref in reference_triples:
        by_key.setdefault(canon(render_triple(ref)), ref)
    mapping: dict[tuple[str, str, str], tuple[str, str, str]] = {}
    seen: set[str] = set()
    for triple in triples:
        rendered = canon(render_triple(triple))
        if rendered in seen:
            continue
        seen.add(rendered)
        if rendered in by_key:
            mapping[triple] = by_key[rendered]
            continue
        if not reference_triples:
            mapping[triple] = triple
            continue
        response = gateway.complete(
            ChatRequest(
                system_prompt=TRIPLE_MATCH_PROMPT,
                user_content=_triple_user_content(list(reference_triples), triple),
            )
        ).strip()
        response_key = canon(response)
        if response_key in by_key:
            mapping[triple] = by_key[response_key]
        else:
            if response_key != rendered:
                audit.add(
                    "normalization",
                    "triple alignment passthrough",
                    f"unrecognized response {response!r} for {render_triple(triple)}",
                )
            mapping[triple] = triple
    return mapping


def apply_triple_mapping(
    tuples: Sequence[ResultTuple],
    mapping: dict[tuple[str, str, str], tuple[str, str, str]],
) -> list[ResultTuple]:
    out: list[ResultTuple] = []
    for t in tuples:
        target = mapping.get((t.task, t.dataset, t.metric))
        if target is None:
            out.append(t)
        else:
            out.append(replace(t, task=target[0], dataset=target[1], metric=target[2]))
    return out


def build_masking_plan(
    predefined: dict[str, Sequence[str]],
    fraction: float | None = None,
    names: Sequence[str] | None = None,
    seed: int = 0,
) -> dict[str, set[str]]:
    """Choose which task and dataset names to withhold for the partial setting.

    Exactly one of `fraction` (sampled per type, deterministic under `seed`)
    or `names` (explicit) selects the mask. Metric names are never masked.
    """
    if (fraction is None) == (names is None):
        raise ConfigurationError("give exactly one of a mask fraction or explicit mask names")
    plan: dict[str, set[str]] = {t: set() for t in ENTITY_TYPES}
    maskable = ("task", "dataset")
    if names is not None:
        for name in names:
            owner = None
            for entity_type in maskable:
                member = find_canonical(name, predefined.get(entity_type, ()))
                if member is not None:
                    owner = entity_type
                    plan[entity_type].add(member)
                    break
            if owner is None:
                if find_canonical(name, predefined.get("metric", ())) is not None:
                    raise ConfigurationError(f"metric names cannot be masked: {name!r}")
                raise ConfigurationError(f"mask name not in the taxonomy: {name!r}")
        return plan
    assert fraction is not None
    if not 0.0 <= fraction <= 1.0:
        raise ConfigurationError(f"mask fraction must lie in [0, 1], got {fraction}")
    rng = random.Random(seed)
    for entity_type in maskable:
        pool = sorted(predefined.get(entity_type, ()))
        count = int(round(fraction * len(pool)))
        plan[entity_type] = set(rng.sample(pool, count)) if count else set()
    return plan
