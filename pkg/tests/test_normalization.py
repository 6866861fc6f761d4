"""Entity and triple normalization tests across the three taxonomy regimes."""

from __future__ import annotations

import pytest

from sciboard.audit import AuditLog
from sciboard.errors import ConfigurationError
from sciboard.extraction import ResultTuple
from sciboard.normalization import (
    ADDED,
    COLD,
    FULLY,
    MAPPED,
    MATCH_COSINE,
    MATCH_EXACT,
    MATCH_LLM,
    PARTIAL,
    UNMATCHED,
    Taxonomy,
    apply_triple_mapping,
    build_masking_plan,
    cosine_match_baseline,
    normalize_entity_dynamic,
    normalize_entity_fixed,
    normalize_triples_second_pass,
    run_corpus_normalization,
)
from sciboard.textnorm import canon

from conftest import make_tuple, scripted_gateway

TASKS = ["Named Entity Recognition (NER)", "Part-of-Speech (POS) Tagging"]
DATASETS = ["CoNLL-2003 - English", "Penn Treebank (PTB)"]
METRICS = ["F1", "Accuracy"]


def _taxonomy(mask=None, setting=None):
    predefined = {"task": TASKS, "dataset": DATASETS, "metric": METRICS}
    if setting is not None:
        return Taxonomy.for_setting(predefined, setting, mask=mask)
    return Taxonomy.build(predefined, mask=mask)


def _gateway(responses: dict[str, str], default: str = "None"):
    """Gateway whose chat answers key off the Input line of the request."""

    def chat_fn(request):
        mention = request.user_content.rsplit("Input: ", 1)[1]
        return responses.get(mention, default)

    return scripted_gateway(chat_fn=chat_fn)


# -- taxonomy -----------------------------------------------------------------------


def test_taxonomy_build_dedupes_canonically():
    taxonomy = Taxonomy.build({"task": ["NER", "ner", "NER "], "dataset": [], "metric": []})
    assert taxonomy.working["task"] == ["NER"]


def test_taxonomy_mask_must_name_known_entries():
    with pytest.raises(ConfigurationError):
        _taxonomy(mask={"task": ["No Such Task"]})


def test_taxonomy_for_setting_shapes():
    fully = _taxonomy(setting=FULLY)
    assert fully.working["task"] == TASKS
    assert not any(fully.masked.values())

    partial = Taxonomy.for_setting(
        {"task": TASKS, "dataset": DATASETS, "metric": METRICS},
        PARTIAL,
        mask={"task": [TASKS[0]]},
    )
    assert partial.working["task"] == [TASKS[1]]
    assert partial.masked["task"] == {TASKS[0]}
    assert partial.working["metric"] == METRICS

    cold = _taxonomy(setting=COLD)
    assert cold.working == {"task": [], "dataset": [], "metric": []}
    assert cold.masked["task"] == set(TASKS)


def test_taxonomy_fully_rejects_mask():
    with pytest.raises(ConfigurationError):
        Taxonomy.for_setting(
            {"task": TASKS, "dataset": [], "metric": []}, FULLY, mask={"task": [TASKS[0]]}
        )


def test_taxonomy_add_is_canonical_membership():
    taxonomy = _taxonomy(setting=COLD)
    assert taxonomy.add("task", "NER") == "NER"
    assert taxonomy.add("task", "ner") == "NER"
    assert taxonomy.add("task", " NER  ") == "NER"
    assert taxonomy.working["task"] == ["NER"]


# -- closed-list matching -----------------------------------------------------------


def test_fixed_match_maps_via_model():
    gateway = _gateway({"NER": TASKS[0]})
    decision = normalize_entity_fixed("NER", _taxonomy(), "task", gateway)
    assert decision.outcome == MAPPED
    assert decision.name == TASKS[0]
    assert decision.matcher == MATCH_LLM


def test_fixed_match_exact_hit_skips_model():
    gateway = _gateway({})
    decision = normalize_entity_fixed("f1", _taxonomy(), "metric", gateway)
    assert decision.outcome == MAPPED
    assert decision.name == "F1"
    assert decision.matcher == MATCH_EXACT
    assert gateway.transport.chat_calls == []


def test_fixed_match_none_answer_is_unmatched():
    gateway = _gateway({}, default="None")
    decision = normalize_entity_fixed("Sentiment Analysis", _taxonomy(), "task", gateway)
    assert decision.outcome == UNMATCHED
    assert decision.name is None


def test_fixed_match_non_member_answer_is_unmatched(caplog):
    gateway = _gateway({}, default="Some Invented Task")
    decision = normalize_entity_fixed("Sentiment Analysis", _taxonomy(), "task", gateway)
    assert decision.outcome == UNMATCHED
    assert "non-member" in caplog.text


def test_fixed_match_response_casing_still_resolves():
    gateway = _gateway({}, default="named entity recognition (ner)")
    decision = normalize_entity_fixed("Sentiment Analysis", _taxonomy(), "task", gateway)
    assert decision.outcome == MAPPED
    assert decision.name == TASKS[0]


def test_fixed_match_requires_names():
    gateway = _gateway({})
    with pytest.raises(ConfigurationError):
        normalize_entity_fixed("NER", _taxonomy(setting=COLD), "task", gateway)
    with pytest.raises(ConfigurationError):
        normalize_entity_fixed("NER", _taxonomy(mask={"task": [TASKS[0]]}), "task", gateway)


def test_fixed_match_prompt_lists_known_names():
    gateway = _gateway({"NER": TASKS[0]})
    normalize_entity_fixed("NER", _taxonomy(), "task", gateway)
    request = gateway.transport.chat_calls[0]
    assert request.user_content == (
        "Item list: {'Named Entity Recognition (NER)', 'Part-of-Speech (POS) Tagging'}"
        "\nInput: NER"
    )


# -- open-list matching -------------------------------------------------------------


def test_dynamic_match_maps_onto_member():
    taxonomy = _taxonomy()
    gateway = _gateway({"PTB": "penn treebank (ptb)"})
    decision = normalize_entity_dynamic("PTB", taxonomy, "dataset", gateway)
    assert decision.outcome == MAPPED
    assert decision.name == "Penn Treebank (PTB)"
    assert taxonomy.sizes()["dataset"] == 2


def test_dynamic_match_adds_model_rewording():
    taxonomy = _taxonomy(setting=COLD)
    gateway = _gateway({"NER task": "Named Entity Recognition"})
    decision = normalize_entity_dynamic("NER task", taxonomy, "task", gateway)
    assert decision.outcome == ADDED
    assert decision.name == "Named Entity Recognition"
    assert taxonomy.working["task"] == ["Named Entity Recognition"]


def test_dynamic_match_exact_hit_skips_model():
    taxonomy = _taxonomy(setting=COLD)
    taxonomy.add("task", "NER")
    gateway = _gateway({})
    decision = normalize_entity_dynamic(" ner ", taxonomy, "task", gateway)
    assert decision.outcome == MAPPED
    assert decision.matcher == MATCH_EXACT
    assert gateway.transport.chat_calls == []


def test_dynamic_match_empty_response_keeps_mention(caplog):
    taxonomy = _taxonomy(setting=COLD)
    gateway = _gateway({}, default="")
    decision = normalize_entity_dynamic("NER", taxonomy, "task", gateway)
    assert decision.outcome == ADDED
    assert decision.name == "NER"
    assert "empty text" in caplog.text


def test_dynamic_match_growth_is_monotone_and_closed():
    taxonomy = _taxonomy(setting=COLD)
    gateway = _gateway({}, default="")  # every mention kept verbatim

    mentions = ["NER", "ner", "Chunking", " NER", "chunking "]
    for mention in mentions:
        normalize_entity_dynamic(mention, taxonomy, "task", gateway)
    assert taxonomy.working["task"] == ["NER", "Chunking"]


# -- cosine baseline ----------------------------------------------------------------


def test_cosine_match_picks_argmax_above_threshold():
    vectors = {
        "NER": [1.0, 0.0],
        TASKS[0]: [0.95, 0.31],  # cos ~= 0.95
        TASKS[1]: [0.40, 0.92],  # cos ~= 0.40
    }
    gateway = scripted_gateway(vectors=vectors)
    decision = cosine_match_baseline("NER", _taxonomy(), "task", gateway, threshold=0.5)
    assert decision.outcome == MAPPED
    assert decision.name == TASKS[0]
    assert decision.matcher == MATCH_COSINE
    assert gateway.transport.embed_calls == [["NER"] + TASKS]


def test_cosine_match_below_threshold_is_unmatched():
    vectors = {
        "Parsing": [1.0, 0.0],
        TASKS[0]: [0.30, 0.95],
        TASKS[1]: [0.20, 0.98],
    }
    gateway = scripted_gateway(vectors=vectors)
    decision = cosine_match_baseline("Parsing", _taxonomy(), "task", gateway, threshold=0.5)
    assert decision.outcome == UNMATCHED
    assert decision.name is None


def test_cosine_match_requires_names():
    gateway = scripted_gateway()
    with pytest.raises(ConfigurationError):
        cosine_match_baseline("NER", _taxonomy(setting=COLD), "task", gateway)


# -- corpus runs --------------------------------------------------------------------


def _corpus():
    return {
        "p1": [
            make_tuple(paper_id="p1", task="NER", result_raw="91.26"),
            make_tuple(paper_id="p1", task="Sentiment Analysis", dataset="SST-2", result_raw="88.0"),
        ],
        "p2": [
            make_tuple(paper_id="p2", task="POS Tagging", dataset="PTB", metric="Accuracy", result_raw="97.55"),
        ],
    }


def _mapping_gateway():
    return _gateway(
        {
            "NER": TASKS[0],
            "POS Tagging": TASKS[1],
            "PTB": DATASETS[1],
        },
        default="None",
    )


def test_fully_run_discards_unmatched_tuples():
    audit = AuditLog()
    result = run_corpus_normalization(
        _corpus(), _taxonomy(setting=FULLY), FULLY, ["p1", "p2"], _mapping_gateway(), audit=audit
    )
    assert [(t.paper_id, t.task, t.dataset, t.metric) for t in result.tuples] == [
        ("p1", TASKS[0], DATASETS[0], "F1"),
        ("p2", TASKS[1], DATASETS[1], "Accuracy"),
    ]
    discarded = [d for d in result.dispositions if d["disposition"] == "discarded"]
    assert len(discarded) == 1
    assert "Sentiment Analysis" in discarded[0]["reason"]
    assert any(e.reason == "tuple discarded" for e in audit.entries)
    # discarding never shrinks or grows a closed taxonomy
    assert result.taxonomy.working["task"] == TASKS


def test_fully_run_result_values_survive():
    result = run_corpus_normalization(
        _corpus(), _taxonomy(setting=FULLY), FULLY, ["p2", "p1"], _mapping_gateway()
    )
    raws = {t.paper_id: t.result_raw for t in result.tuples}
    assert raws == {"p1": "91.26", "p2": "97.55"}


def test_cold_run_grows_taxonomy_monotonically():
    corpus = _corpus()
    gateway = _gateway({}, default="")  # keep every mention
    taxonomy = _taxonomy(setting=COLD)
    result = run_corpus_normalization(corpus, taxonomy, COLD, ["p1", "p2"], gateway)
    assert all(d.outcome in (ADDED, MAPPED) for d in result.decisions)
    # every distinct canonical mention ends up in the working set exactly once
    for entity_type, attr in (("task", "task"), ("dataset", "dataset"), ("metric", "metric")):
        mentions = {
            canon(getattr(t, attr)) for tuples in corpus.values() for t in tuples
        }
        working = taxonomy.working[entity_type]
        assert {canon(n) for n in working} == mentions
        assert len(working) == len(mentions)
    assert len(result.tuples) == 3  # nothing discarded


def test_cold_run_is_deterministic_for_fixed_order():
    def run():
        return run_corpus_normalization(
            _corpus(), _taxonomy(setting=COLD), COLD, ["p2", "p1"], _gateway({}, default="")
        )

    first, second = run(), run()
    assert [d.to_json() for d in first.decisions] == [d.to_json() for d in second.decisions]
    assert first.taxonomy.working == second.taxonomy.working
    assert [t.to_json() for t in first.tuples] == [t.to_json() for t in second.tuples]


def test_cold_run_decisions_follow_paper_order():
    result = run_corpus_normalization(
        _corpus(), _taxonomy(setting=COLD), COLD, ["p2", "p1"], _gateway({}, default="")
    )
    assert [d.paper_id for d in result.decisions] == ["p2"] * 3 + ["p1"] * 6


def test_partial_run_maps_known_and_adds_masked():
    corpus = {"p1": [make_tuple(paper_id="p1", task="NER", dataset="CoNLL-2003 - English")]}
    taxonomy = Taxonomy.for_setting(
        {"task": TASKS, "dataset": DATASETS, "metric": METRICS},
        PARTIAL,
        mask={"task": [TASKS[0]]},
    )
    gateway = _gateway({"NER": "Named Entity Recognition"})
    result = run_corpus_normalization(corpus, taxonomy, PARTIAL, ["p1"], gateway)
    assert result.tuples[0].task == "Named Entity Recognition"
    assert result.tuples[0].dataset == DATASETS[0]  # exact member, no model call needed
    assert "Named Entity Recognition" in taxonomy.working["task"]


def test_run_validation_errors():
    gateway = _gateway({})
    with pytest.raises(ConfigurationError):
        run_corpus_normalization(_corpus(), _taxonomy(), "warm", ["p1", "p2"], gateway)
    with pytest.raises(ConfigurationError):
        run_corpus_normalization(_corpus(), _taxonomy(), FULLY, ["p1"], gateway)
    with pytest.raises(ConfigurationError):
        run_corpus_normalization(_corpus(), _taxonomy(), FULLY, ["p1", "p2"], gateway, matcher="fuzzy")
    with pytest.raises(ConfigurationError):
        run_corpus_normalization(
            _corpus(), _taxonomy(setting=COLD), COLD, ["p1", "p2"], gateway, matcher=MATCH_COSINE
        )
    with pytest.raises(ConfigurationError):
        run_corpus_normalization(
            _corpus(), _taxonomy(mask={"task": [TASKS[0]]}), FULLY, ["p1", "p2"], gateway
        )
    with pytest.raises(ConfigurationError):
        run_corpus_normalization(_corpus(), _taxonomy(), COLD, ["p1", "p2"], gateway)


# -- second pass --------------------------------------------------------------------


REFS = [
    ("Named Entity Recognition (NER)", "CoNLL-2003 - English", "F1"),
    ("Text Chunking", "CoNLL-2000", "F1"),
]


def _triple_gateway(responses: dict[str, str], default: str = "(x, y, z)"):
    def chat_fn(request):
        rendered = request.user_content.rsplit("Input: ", 1)[1]
        return responses.get(rendered, default)

    return scripted_gateway(chat_fn=chat_fn)


def test_second_pass_exact_rendering_needs_no_model():
    gateway = _triple_gateway({})
    triples = [("named entity recognition (ner)", "conll-2003 - english", "f1")]
    mapping = normalize_triples_second_pass(triples, REFS, gateway)
    assert mapping[triples[0]] == REFS[0]
    assert gateway.transport.chat_calls == []


def test_second_pass_maps_via_model():
    triple = ("NER", "CoNLL-2003", "F1")
    gateway = _triple_gateway(
        {"(NER, CoNLL-2003, F1)": "(Named Entity Recognition (NER), CoNLL-2003 - English, F1)"}
    )
    mapping = normalize_triples_second_pass([triple], REFS, gateway)
    assert mapping[triple] == REFS[0]


def test_second_pass_unrecognized_answer_passes_through():
    audit = AuditLog()
    triple = ("NER", "CoNLL-2003", "F1")
    gateway = _triple_gateway({}, default="(Some, Other, Triple)")
    mapping = normalize_triples_second_pass([triple], REFS, gateway, audit)
    assert mapping[triple] == triple
    assert any(e.reason == "triple alignment passthrough" for e in audit.entries)


def test_second_pass_echoed_input_passes_through_without_audit():
    audit = AuditLog()
    triple = ("NER", "CoNLL-2003", "F1")
    gateway = _triple_gateway({}, default="(NER, CoNLL-2003, F1)")
    mapping = normalize_triples_second_pass([triple], REFS, gateway, audit)
    assert mapping[triple] == triple
    assert audit.entries == []


def test_second_pass_empty_reference_makes_no_calls():
    gateway = _triple_gateway({})
    triple = ("NER", "CoNLL-2003", "F1")
    mapping = normalize_triples_second_pass([triple], [], gateway)
    assert mapping[triple] == triple
    assert gateway.transport.chat_calls == []


def test_second_pass_queries_each_distinct_triple_once():
    gateway = _triple_gateway({}, default="None of these")
    triple = ("NER", "CoNLL-2003", "F1")
    normalize_triples_second_pass([triple, triple, ("ner", "conll-2003", "f1")], REFS, gateway)
    assert len(gateway.transport.chat_calls) == 1


def test_apply_triple_mapping_renames_only_mapped():
    tuples = [
        make_tuple(task="NER", dataset="CoNLL-2003", metric="F1"),
        make_tuple(task="Text Chunking", dataset="CoNLL-2000", metric="F1"),
    ]
    mapping = {("NER", "CoNLL-2003", "F1"): REFS[0]}
    out = apply_triple_mapping(tuples, mapping)
    assert (out[0].task, out[0].dataset, out[0].metric) == REFS[0]
    assert out[0].result_raw == tuples[0].result_raw
    assert out[1] == tuples[1]


def test_second_pass_is_idempotent():
    triple = ("NER", "CoNLL-2003", "F1")
    gateway = _triple_gateway(
        {"(NER, CoNLL-2003, F1)": "(Named Entity Recognition (NER), CoNLL-2003 - English, F1)"}
    )
    mapping = normalize_triples_second_pass([triple], REFS, gateway)
    renamed = apply_triple_mapping([make_tuple(task="NER", dataset="CoNLL-2003")], mapping)
    again_gateway = _triple_gateway({})
    again = normalize_triples_second_pass(
        [(renamed[0].task, renamed[0].dataset, renamed[0].metric)], REFS, again_gateway
    )
    assert again[(renamed[0].task, renamed[0].dataset, renamed[0].metric)] == REFS[0]
    assert again_gateway.transport.chat_calls == []


# -- masking plans ------------------------------------------------------------------


def test_masking_plan_fraction_counts():
    predefined = {
        "task": [f"Task {i}" for i in range(23)],
        "dataset": [f"Set {i}" for i in range(10)],
        "metric": METRICS,
    }
    plan = build_masking_plan(predefined, fraction=0.5, seed=7)
    assert len(plan["task"]) == 12  # round(11.5) at even target
    assert len(plan["dataset"]) == 5
    assert plan["metric"] == set()


def test_masking_plan_is_deterministic_per_seed():
    predefined = {"task": [f"Task {i}" for i in range(9)], "dataset": DATASETS, "metric": []}
    one = build_masking_plan(predefined, fraction=0.4, seed=3)
    two = build_masking_plan(predefined, fraction=0.4, seed=3)
    other = build_masking_plan(predefined, fraction=0.4, seed=4)
    assert one == two
    assert one["task"] != other["task"]


def test_masking_plan_edge_fractions():
    predefined = {"task": TASKS, "dataset": DATASETS, "metric": METRICS}
    assert build_masking_plan(predefined, fraction=0.0)["task"] == set()
    full = build_masking_plan(predefined, fraction=1.0)
    assert full["task"] == set(TASKS)
    assert full["dataset"] == set(DATASETS)
    with pytest.raises(ConfigurationError):
        build_masking_plan(predefined, fraction=1.2)


def test_masking_plan_explicit_names():
    predefined = {"task": TASKS, "dataset": DATASETS, "metric": METRICS}
    plan = build_masking_plan(predefined, names=["penn treebank (ptb)", TASKS[1]])
    assert plan["dataset"] == {DATASETS[1]}
    assert plan["task"] == {TASKS[1]}


def test_masking_plan_rejects_metric_and_unknown_names():
    predefined = {"task": TASKS, "dataset": DATASETS, "metric": METRICS}
    with pytest.raises(ConfigurationError):
        build_masking_plan(predefined, names=["F1"])
    with pytest.raises(ConfigurationError):
        build_masking_plan(predefined, names=["Mystery Dataset"])
    with pytest.raises(ConfigurationError):
        build_masking_plan(predefined)
    with pytest.raises(ConfigurationError):
        build_masking_plan(predefined, fraction=0.5, names=["F1"])
