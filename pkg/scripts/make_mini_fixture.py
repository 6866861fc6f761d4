#!/usr/bin/env python3
"""Regenerate the bundled mini corpus under data/mini.

Writes three document bundles, the matching gold annotations, and a cassette
recorded by running the real pipeline against a deterministic scripted
provider. The provider answers extraction requests with fixed tuples per
paper, matches entity variants by a small concept table, and echoes anything
it does not recognize, so every recorded exchange is a pure function of the
request. After recording, every scenario the test suite replays is replayed
here once to prove the cassette is complete.

Run from the repository root:

    python3 scripts/make_mini_fixture.py
"""

from __future__ import annotations

import hashlib
import json
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from sciboard import cli
from sciboard.audit import AuditLog
from sciboard.bundles import load_bundles
from sciboard.corpus import chunk_text
from sciboard.extraction import EXTRACTION_SYSTEM_PROMPT
from sciboard.gateway import ChatRequest, LlmGateway
from sciboard.goldstore import dataset_statistics, derive_gold_leaderboards, load_gold
from sciboard.normalization import (
    CLOSED_MATCH_PROMPT,
    OPEN_MATCH_PROMPT,
    TRIPLE_MATCH_PROMPT,
    render_triple,
)
from sciboard.textnorm import canon

REPO = Path(__file__).resolve().parent.parent
MINI = REPO / "data" / "mini"

# Surfaces the scripted model can resolve beyond literal identity. Keys and
# values compare canonically (casefolded, whitespace collapsed).
VARIANTS = {
    "ner": "named entity recognition (ner)",
    "pos tagging": "part-of-speech (pos) tagging",
    "ptb": "penn treebank (ptb)",
    "conll-2002- dutch": "conll-2002 - dutch",
}


def concept(name: str) -> str:
    key = canon(name)
    return VARIANTS.get(key, key)


BODIES = {
    "1603.01354": "\n\n".join(
        [
            "arXiv:1603.01354. We describe a neural model for sequence labeling "
            "that needs no hand-crafted features and no external gazetteers. "
            "Character-level convolutions feed a bidirectional LSTM encoder, and a "
            "CRF layer scores complete label sequences, so the network is trained "
            "end to end from raw annotated text alone. The same architecture and "
            "the same hyperparameters are applied unchanged to two classic "
            "benchmarks, part-of-speech tagging and named entity recognition, to "
            "test how far a single feature-free labeler can go.",
            "The character convolutions capture prefixes, suffixes, and "
            "capitalization patterns that earlier systems encoded by hand. Their "
            "output is concatenated with pretrained word embeddings before the "
            "recurrent encoder. We keep the output layer a first-order CRF since "
            "label bigram constraints matter for span-based annotation schemes; "
            "decoding uses Viterbi search. Dropout on both the embedding and the "
            "recurrent layers was the only regularization that consistently "
            "helped on the development sets.",
            "For part-of-speech tagging we train on the standard splits of the "
            "Penn Treebank and reach a token-level accuracy of 97.55, matching "
            "heavily engineered taggers. For named entity recognition we use the "
            "CoNLL-2003 English shared-task data and obtain an entity-level F1 of "
            "91.21, the best reported result among models that use no external "
            "knowledge resources. Ablations show the character convolutions are "
            "worth roughly one point of F1, and the CRF layer a further half "
            "point, confirming that both components contribute.",
        ]
    ),
    "1703.06345": "\n\n".join(
        [
            "arXiv:1703.06345. Annotated corpora for sequence labeling are small "
            "in most languages, while English resources are comparatively rich. "
            "We study transfer across languages and across annotation schemes "
            "with a shared encoder whose lower layers are reused between source "
            "and target tasks. Only the output projection and the CRF transition "
            "scores are task specific, which lets low-resource targets borrow "
            "most of their parameters from a high-resource source.",
            "We evaluate on named entity recognition in three languages and "
            "report entity-level F1. Training jointly with the English source, "
            "the model achieves an F1 score of 0.9126 on the CoNLL-2003 English "
            "test set. On CoNLL-2002 Spanish it reaches 85.77%, and on "
            "CoNLL-2002 Dutch it reaches 85.19, both improvements over training "
            "on the target language alone. Gains are largest when the target "
            "training set is smallest, which is the regime transfer is meant "
            "for.",
            "The same recipe transfers across tasks within English. Reusing the "
            "encoder trained on the source tagset, the model obtains 97.55 "
            "accuracy on Penn Treebank part-of-speech tagging and a 95.41 F1 on "
            "CoNLL-2000 text chunking. Neither number requires task-specific "
            "tuning beyond the shared configuration, suggesting the encoder "
            "learns a representation of context that is largely annotation "
            "agnostic.",
            "Two details matter for reproducing these numbers. First, the "
            "shared layers must be trained with a source-to-target batch ratio "
            "that shrinks as the target corpus grows; a fixed ratio either "
            "drowns the target signal or wastes the source. Second, transition "
            "scores must never be shared, even between tagsets that look "
            "compatible, because label bigram statistics differ across "
            "annotation guidelines more than emission statistics do. With both "
            "in place, transfer never hurt in our experiments, and the full "
            "configuration files are released with the code so every row of the "
            "results table can be regenerated from a single training script. "
            "An ablation that freezes the shared layers after source training "
            "recovers only half of the gain, so the encoder keeps adapting to "
            "the target even while it is being regularized by the source.",
        ]
    ),
    "1709.04109": "\n\n".join(
        [
            "arXiv:1709.04109. We train a character-aware neural language model "
            "jointly with a sequence labeler so that the language modeling "
            "objective acts as a task-aware regularizer. The shared character "
            "encoder is optimized for both objectives at once, and a small "
            "highway layer routes language-model features into the labeler. The "
            "extra objective costs nothing at test time because the language "
            "model head is dropped after training.",
            "Joint training is most useful when the labeled corpus is small "
            "relative to the space of surface forms, which is exactly where "
            "character-level evidence helps. We therefore evaluate on three "
            "word-level benchmarks with very different label densities: named "
            "entity recognition on CoNLL-2003 English, part-of-speech tagging on "
            "the Penn Treebank, and text chunking on CoNLL-2000.",
            "The jointly trained model reaches 91.85 F1 on CoNLL-2003 named "
            "entity recognition and 97.59 accuracy on Penn Treebank tagging. On "
            "CoNLL-2000 chunking it scores an F1 of 96.13 ± 0.05 across five "
            "random initializations, a new best among single models at the time "
            "of writing. Removing the language-model objective costs between a "
            "quarter and half a point on every benchmark, with the largest drop "
            "on the smallest training set.",
            "Error analysis shows where the auxiliary objective earns its keep. "
            "Most of the corrected mistakes involve rare or unseen surface "
            "forms: lowercased entity names, hyphenated compounds, and tokens "
            "whose capitalization is uninformative because they begin a "
            "sentence. The language model pushes the character encoder to "
            "represent such forms distinctly even when the labeled data never "
            "shows them, and the highway gate learns to consult that signal "
            "mainly for tokens the labeler is otherwise unsure about. Training "
            "time grows by roughly a third, which we consider a good trade for "
            "a consistent accuracy gain that requires no extra annotation. We "
            "also tried replacing the joint objective with a pretrain-then-"
            "finetune schedule; it closes most but not all of the gap, and it "
            "is noticeably more sensitive to the finetuning learning rate, so "
            "we recommend the joint form whenever both losses fit in memory. "
            "All reported numbers are the mean of five runs with fixed data "
            "order, and the variance across runs stays below the gap to the "
            "nearest baseline on every benchmark we evaluated.",
        ]
    ),
}

TABLES = {
    "1603.01354": [
        "Model | PTB Acc. | CoNLL-2003 F1\n"
        "BLSTM | 97.13 | 89.91\n"
        "BLSTM-CNN | 97.33 | 90.91\n"
        "BLSTM-CNN-CRF (ours) | 97.55 | 91.21"
    ],
    "1703.06345": [
        "Dataset | Metric | Score\n"
        "CoNLL-2003 English | F1 | 0.9126\n"
        "CoNLL-2002 Spanish | F1 | 85.77%\n"
        "CoNLL-2002 Dutch | F1 | 85.19\n"
        "Penn Treebank | Accuracy | 97.55\n"
        "CoNLL-2000 | F1 | 95.41"
    ],
    "1709.04109": [
        "Task | Dataset | Result\n"
        "NER | CoNLL-2003 | 91.85\n"
        "POS | PTB | 97.59\n"
        "Chunking | CoNLL-2000 | 96.13 ± 0.05"
    ],
}

# What the scripted model extracts from each paper. One surface per concept
# corpus-wide, so discovery runs converge to the same taxonomy regardless of
# paper order.
EXTRACTIONS = {
    "1603.01354": [
        {"Task": "POS Tagging", "Dataset": "PTB", "Metric": "Accuracy", "Result": "97.55"},
        {"Task": "NER", "Dataset": "CoNLL-2003 - English", "Metric": "F1", "Result": "91.21"},
    ],
    "1703.06345": [
        {"Task": "NER", "Dataset": "CoNLL-2003 - English", "Metric": "F1", "Result": "0.9126"},
        {"Task": "NER", "Dataset": "CoNLL-2002 - Spanish", "Metric": "F1", "Result": "85.77%"},
        {"Task": "NER", "Dataset": "CoNLL-2002- Dutch", "Metric": "F1", "Result": "85.19"},
        {"Task": "POS Tagging", "Dataset": "PTB", "Metric": "Accuracy", "Result": "97.55"},
        {"Task": "Text Chunking", "Dataset": "CoNLL-2000", "Metric": "F1", "Result": "95.41"},
    ],
    "1709.04109": [
        {"Task": "NER", "Dataset": "CoNLL-2003 - English", "Metric": "F1", "Result": "91.85"},
        {"Task": "POS Tagging", "Dataset": "PTB", "Metric": "Accuracy", "Result": "97.59"},
        {"Task": "Text Chunking", "Dataset": "CoNLL-2000", "Metric": "F1", "Result": "96.13 ± 0.05"},
    ],
}

GOLD = {
    "papers": sorted(BODIES),
    "taxonomy": {
        "task": [
            "Named Entity Recognition (NER)",
            "Part-of-Speech (POS) Tagging",
            "Text Chunking",
        ],
        "dataset": [
            "CoNLL-2003 - English",
            "CoNLL-2002 - Spanish",
            "CoNLL-2002 - Dutch",
            "CoNLL-2000",
            "Penn Treebank (PTB)",
        ],
        "metric": ["F1", "Precision", "Recall", "Accuracy"],
    },
    "tuples": {
        "1603.01354": [
            {"task": "Part-of-Speech (POS) Tagging", "dataset": "Penn Treebank (PTB)", "metric": "Accuracy", "result": 97.55},
            {"task": "Named Entity Recognition (NER)", "dataset": "CoNLL-2003 - English", "metric": "F1", "result": 91.21},
        ],
        "1703.06345": [
            {"task": "Named Entity Recognition (NER)", "dataset": "CoNLL-2003 - English", "metric": "F1", "result": 91.26},
            {"task": "Named Entity Recognition (NER)", "dataset": "CoNLL-2002 - Spanish", "metric": "F1", "result": 85.77},
            {"task": "Named Entity Recognition (NER)", "dataset": "CoNLL-2002 - Dutch", "metric": "F1", "result": 85.19},
            {"task": "Part-of-Speech (POS) Tagging", "dataset": "Penn Treebank (PTB)", "metric": "Accuracy", "result": 97.55},
            {"task": "Text Chunking", "dataset": "CoNLL-2000", "metric": "F1", "result": 95.41},
        ],
        "1709.04109": [
            {"task": "Named Entity Recognition (NER)", "dataset": "CoNLL-2003 - English", "metric": "F1", "result": 91.85},
            {"task": "Part-of-Speech (POS) Tagging", "dataset": "Penn Treebank (PTB)", "metric": "Accuracy", "result": 97.59},
            {"task": "Text Chunking", "dataset": "CoNLL-2000", "metric": "F1", "result": 96.13},
        ],
    },
    "stats": {
        "papers": 3,
        "tuples": 10,
        "unique_tasks": 3,
        "unique_datasets": 5,
        "unique_metrics": 2,
        "unique_tdms": 5,
        "leaderboards": 2,
        "avg_papers_per_leaderboard": 3.0,
    },
}


def hash_vector(text: str, dim: int = 16) -> list[float]:
    out: list[float] = []
    for i in range(dim):
        digest = hashlib.sha256(f"{text}#{i}".encode("utf-8")).digest()
        out.append(int.from_bytes(digest[:8], "big") / 2**63 - 1.0)
    return out


class FixtureTransport:
    """Deterministic stand-in for a model provider."""

    def __init__(self, reference_triples: list[tuple[str, str, str]]):
        self.reference_triples = reference_triples

    @staticmethod
    def _split_request(content: str) -> tuple[str, str]:
        listing, sep, mention = content.partition("\nInput: ")
        if not sep or not listing.startswith("Item list: "):
            raise AssertionError(f"unexpected match request: {content!r}")
        return listing[len("Item list: ") :], mention

    @staticmethod
    def _listed_names(listing: str) -> list[str]:
        inner = listing.strip()[1:-1]
        if not inner:
            return []
        return [part[1:-1] for part in inner.split(", ")]

    @staticmethod
    def _triple_parts(rendered: str) -> tuple[str, str, str]:
        inner = rendered.strip()
        if not (inner.startswith("(") and inner.endswith(")")):
            raise AssertionError(f"unexpected triple rendering: {rendered!r}")
        parts = inner[1:-1].split(", ")
        if len(parts) != 3:
            raise AssertionError(f"unexpected triple rendering: {rendered!r}")
        return parts[0], parts[1], parts[2]

    def chat(self, request: ChatRequest) -> str:
        prompt = request.system_prompt
        if prompt == EXTRACTION_SYSTEM_PROMPT:
            for paper_id, rows in EXTRACTIONS.items():
                if f"arXiv:{paper_id}" in request.user_content:
                    return json.dumps(rows, ensure_ascii=False)
            raise AssertionError("extraction request names no known paper")
        if prompt in (CLOSED_MATCH_PROMPT, OPEN_MATCH_PROMPT):
            listing, mention = self._split_request(request.user_content)
            for name in self._listed_names(listing):
                if concept(name) == concept(mention):
                    return name
            return "None" if prompt == CLOSED_MATCH_PROMPT else mention
        if prompt == TRIPLE_MATCH_PROMPT:
            _, rendered = self._split_request(request.user_content)
            parts = self._triple_parts(rendered)
            for ref in self.reference_triples:
                if all(concept(a) == concept(b) for a, b in zip(parts, ref)):
                    return render_triple(ref)
            return rendered
        raise AssertionError(f"unexpected system prompt: {prompt[:60]!r}")

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [hash_vector(text) for text in texts]


def write_bundles() -> None:
    bundles_dir = MINI / "bundles"
    if bundles_dir.exists():
        shutil.rmtree(bundles_dir)
    bundles_dir.mkdir(parents=True)
    for paper_id in sorted(BODIES):
        chunks = chunk_text(BODIES[paper_id])
        payload = {
            "paper_id": paper_id,
            "chunks": chunks,
            "tables": TABLES[paper_id],
            "source_path": f"{paper_id}.pdf",
        }
        path = bundles_dir / f"{paper_id}.bundle.json"
        path.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path} ({len(chunks)} chunks)")


def write_gold() -> None:
    path = MINI / "gold.json"
    path.write_text(json.dumps(GOLD, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    gold = load_gold(path)
    stats = dataset_statistics(gold)
    assert stats == GOLD["stats"], f"stats drifted: {stats}"
    print(f"wrote {path} ({stats['tuples']} tuples, {stats['leaderboards']} boards)")


def run_scenarios(gateway: LlmGateway, out_root: Path) -> dict[str, dict]:
    """Run the fully scenario and the three-seed cold scenario; returns the
    flattened metrics of every run for comparison."""
    gold = load_gold(MINI / "gold.json")
    bundles = load_bundles(MINI / "bundles")
    base = cli.RunConfig(
        gateway_mode=gateway.mode,
        cassette=str(gateway.cassette_path) if gateway.cassette_path else None,
        bundles=str(MINI / "bundles"),
        gold=str(MINI / "gold.json"),
        workers=1 if gateway.mode == "record" else 4,
    )
    audit = AuditLog()
    extractions = cli.extract_corpus(bundles, gateway, base, audit)
    tuples_by_paper = cli._tuples_from_extractions(extractions)

    results: dict[str, dict] = {}
    fully = replace(base, setting="fully")
    report = cli.run_single(tuples_by_paper, gold, fully, gateway, 1, out_root / "fully")
    results["fully"] = report.flat_metrics()

    # the default seeds plus two whose paper orders genuinely differ,
    # so replayed runs can demonstrate order invariance
    cold = replace(base, setting="cold", seeds=(1, 2, 3, 4, 5))
    for seed in cold.seeds:
        report = cli.run_single(
            tuples_by_paper, gold, cold, gateway, seed, out_root / f"cold_seed_{seed}"
        )
        results[f"cold_seed_{seed}"] = report.flat_metrics()
    return results


def main() -> None:
    MINI.mkdir(parents=True, exist_ok=True)
    write_bundles()
    write_gold()

    gold = load_gold(MINI / "gold.json")
    refs = [(b.task, b.dataset, b.metric) for b in derive_gold_leaderboards(gold, threshold=3)]
    assert len(refs) == 2, refs
    transport = FixtureTransport(refs)

    cassette = MINI / "cassette.ndjson"
    if cassette.exists():
        cassette.unlink()

    with tempfile.TemporaryDirectory() as tmp:
        recorder = LlmGateway.record_cassette(transport, cassette)
        recorded = run_scenarios(recorder, Path(tmp) / "record")
        print(f"recorded {recorder.live_calls} live calls -> {cassette}")

        replayer = LlmGateway.load_cassette(None, cassette)
        replayed = run_scenarios(replayer, Path(tmp) / "replay")
        assert replayer.live_calls == 0
        assert replayed == recorded, "replay disagrees with the recording"

    for name in sorted(recorded):
        metrics = recorded[name]
        summary = ", ".join(f"{k}={v:.4f}" for k, v in sorted(metrics.items()))
        print(f"{name}: {summary}")
    assert all(v == 1.0 for v in recorded["fully"].values()), recorded["fully"]
    cold_reports = [recorded[f"cold_seed_{s}"] for s in (1, 2, 3, 4, 5)]
    assert all(r == cold_reports[0] for r in cold_reports), "cold runs drifted across seeds"

    lines = cassette.read_text(encoding="utf-8").splitlines()
    kinds = [json.loads(line)["kind"] for line in lines]
    print(f"cassette holds {len(lines)} entries ({kinds.count('chat')} chat, {kinds.count('embed')} embed)")


if __name__ == "__main__":
    sys.exit(main())
