"""Command line entry points wiring the pipeline stages together.

Configuration resolves flags over config-file values over defaults, and the
resolved form is echoed into each run directory so a run can be re-executed
from its own record.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import click

from . import boards as boards_mod
from . import corpus, evaluation, extraction, goldstore, normalization
from .audit import AuditLog
from .bundles import DocumentBundle, load_bundles
from .errors import ConfigurationError, ExtractionParseError, SciboardError
from .gateway import Decoding, HttpTransport, LlmGateway

logger = logging.getLogger(__name__)

ENV_BASE_URL = "SCIBOARD_BASE_URL"
ENV_MODEL = "SCIBOARD_MODEL"
ENV_EMBEDDING_MODEL = "SCIBOARD_EMBEDDING_MODEL"
ENV_API_KEY = "SCIBOARD_API_KEY"


@dataclass
class RunConfig:
    setting: str = normalization.FULLY
    threshold: int = boards_mod.DEFAULT_ENTRY_THRESHOLD
    top_k: int = corpus.DEFAULT_TOP_K
    query: str = corpus.RETRIEVAL_QUERY
    seeds: tuple[int, ...] = (1, 2, 3)
    mask_fraction: float | None = None
    mask_names: tuple[str, ...] = ()
    mask_seed: int = 0
    matcher: str = normalization.MATCH_LLM
    cosine_threshold: float = normalization.DEFAULT_COSINE_THRESHOLD
    gateway_mode: str = "replay"
    cassette: str | None = None
    base_url: str | None = None
    model: str | None = None
    embedding_model: str | None = None
    api_key: str | None = None
    bundles: str | None = None
    gold: str | None = None
    out: str | None = None
    few_shot: str | None = None
    max_tokens: int = 2048
    workers: int = 4

    def validate(self, needs_gateway: bool = True) -> None:
        if self.setting not in normalization.SETTINGS:
            raise ConfigurationError(f"unknown setting {self.setting!r}")
        if self.threshold < 1:
            raise ConfigurationError("threshold must be positive")
        if self.top_k < 1:
            raise ConfigurationError("top-k must be positive")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.gateway_mode not in ("live", "record", "replay"):
            raise ConfigurationError(f"unknown gateway mode {self.gateway_mode!r}")
        if self.matcher not in (normalization.MATCH_LLM, normalization.MATCH_COSINE):
            raise ConfigurationError(f"unknown matcher {self.matcher!r}")
        if self.matcher == normalization.MATCH_COSINE and self.setting != normalization.FULLY:
            raise ConfigurationError("the cosine matcher only applies to the fully setting")
        has_mask = self.mask_fraction is not None or bool(self.mask_names)
        if self.setting == normalization.PARTIAL and not has_mask:
            raise ConfigurationError("the partial setting requires a mask plan")
        if self.setting != normalization.PARTIAL and has_mask:
            raise ConfigurationError("mask plans only apply to the partial setting")
        if self.mask_fraction is not None and self.mask_names:
            raise ConfigurationError("give either a mask fraction or mask names, not both")
        if needs_gateway and self.gateway_mode in ("record", "replay") and not self.cassette:
            raise ConfigurationError(f"{self.gateway_mode} mode requires a cassette path")

    def to_json(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["seeds"] = list(self.seeds)
        data["mask_names"] = list(self.mask_names)
        data.pop("api_key", None)  # never echo credentials
        return data


def _load_config_file(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    unknown = set(data) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ConfigurationError(f"config file {path} has unknown keys: {sorted(unknown)}")
    return data


def resolve_config(
    config_file: str | None, cli_values: dict[str, Any], needs_gateway: bool = True
) -> RunConfig:
    """Defaults, then config-file values, then explicitly given flags."""
    merged: dict[str, Any] = {}
    merged.update(_load_config_file(config_file))
    for key, value in cli_values.items():
        if value is not None:
            merged[key] = value
    if "seeds" in merged and not isinstance(merged["seeds"], tuple):
        merged["seeds"] = tuple(int(s) for s in merged["seeds"])
    if "mask_names" in merged:
        merged["mask_names"] = tuple(merged["mask_names"])
    config = RunConfig(**merged)
    config.base_url = config.base_url or os.environ.get(ENV_BASE_URL)
    config.model = config.model or os.environ.get(ENV_MODEL)
    config.embedding_model = config.embedding_model or os.environ.get(ENV_EMBEDDING_MODEL)
    config.api_key = config.api_key or os.environ.get(ENV_API_KEY)
    config.validate(needs_gateway=needs_gateway)
    return config


def make_gateway(config: RunConfig) -> LlmGateway:
    transport = None
    if config.gateway_mode in ("live", "record"):
        if not config.base_url or not config.model:
            raise ConfigurationError(
                f"{config.gateway_mode} mode needs a provider: set --base-url/--model or "
                f"{ENV_BASE_URL}/{ENV_MODEL}"
            )
        transport = HttpTransport(
            base_url=config.base_url,
            model=config.model,
            embedding_model=config.embedding_model or "",
            api_key=config.api_key or "",
        )
    return LlmGateway(transport=transport, mode=config.gateway_mode, cassette_path=config.cassette)


def seeded_paper_order(paper_ids: Sequence[str], seed: int) -> list[str]:
    """Deterministic shuffle of the sorted ids."""
    order = sorted(paper_ids)
    random.Random(seed).shuffle(order)
    return order


# -- stages ----------------------------------------------------------------------


def extract_corpus(
    bundles: Sequence[DocumentBundle],
    gateway: LlmGateway,
    config: RunConfig,
    audit: AuditLog,
) -> dict[str, Any]:
    """Retrieve context and extract tuples for every bundle; returns the
    extractions artifact."""
    few_shot = None
    if config.few_shot:
        few_shot = Path(config.few_shot).read_text(encoding="utf-8")
    decoding = Decoding(max_tokens=config.max_tokens)

    def one(bundle: DocumentBundle) -> tuple[str, dict[str, Any]]:
        index = corpus.index_bundle(bundle, gateway)
        scored = corpus.retrieve(
            index, corpus.RetrievalQuery(text=config.query, top_k=config.top_k), gateway
        )
        request = extraction.build_extraction_prompt(
            scored, list(bundle.tables), few_shot=few_shot, decoding=decoding
        )
        response = gateway.complete(request)
        try:
            raw_tuples = extraction.parse_tuples(response, bundle.paper_id, audit)
        except ExtractionParseError as exc:
            audit.add(
                "extraction",
                "unparseable response",
                f"{exc} :: {exc.raw_response[:200]!r}",
                bundle.paper_id,
            )
            raw_tuples = []
        valued = [
            dataclasses.replace(
                t, result_value=boards_mod.canonical_value(t.result_raw, t.metric)
            )
            for t in raw_tuples
        ]
        deduped = extraction.dedupe_best(valued, boards_mod.MetricDirectionRegistry(), audit)
        return bundle.paper_id, {
            "context_chunks": [s.chunk.ordinal for s in scored],
            "similarities": [s.similarity for s in scored],
            "raw": [t.to_json() for t in raw_tuples],
            "deduped": [t.to_json() for t in deduped],
        }

    papers: dict[str, Any] = {}
    if config.workers > 1 and len(bundles) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for paper_id, record in pool.map(one, bundles):
                papers[paper_id] = record
    else:
        for bundle in bundles:
            paper_id, record = one(bundle)
            papers[paper_id] = record
    return {"papers": {pid: papers[pid] for pid in sorted(papers)}}


def _tuples_from_extractions(artifact: dict[str, Any]) -> dict[str, list[extraction.ResultTuple]]:
    return {
        paper_id: [extraction.ResultTuple.from_json(row) for row in record["deduped"]]
        for paper_id, record in artifact["papers"].items()
    }


def normalize_corpus(
    tuples_by_paper: dict[str, list[extraction.ResultTuple]],
    gold: goldstore.GoldDataset,
    config: RunConfig,
    gateway: LlmGateway,
    seed: int,
    audit: AuditLog,
) -> normalization.NormalizationResult:
    mask = None
    if config.setting == normalization.PARTIAL:
        mask = normalization.build_masking_plan(
            gold.taxonomy,
            fraction=config.mask_fraction,
            names=config.mask_names or None,
            seed=config.mask_seed,
        )
    taxonomy = normalization.Taxonomy.for_setting(
        gold.taxonomy, config.setting, mask=mask, gold_triples=gold.gold_triples()
    )
    order = seeded_paper_order(list(tuples_by_paper), seed)
    result = normalization.run_corpus_normalization(
        tuples_by_paper,
        taxonomy,
        config.setting,
        order,
        gateway,
        matcher=config.matcher,
        cosine_threshold=config.cosine_threshold,
        audit=audit,
    )
    if config.setting != normalization.FULLY:
        reference = [
            (b.task, b.dataset, b.metric)
            for b in goldstore.derive_gold_leaderboards(gold, threshold=config.threshold)
        ]
        mapping = normalization.normalize_triples_second_pass(
            extraction.distinct_triples(result.tuples), reference, gateway, audit
        )
        result.tuples = normalization.apply_triple_mapping(result.tuples, mapping)
        result.second_pass = {
            normalization.render_triple(src): normalization.render_triple(dst)
            for src, dst in mapping.items()
        }
        result.second_pass_applied = True
    return result


def build_pred_boards(
    result_tuples: Sequence[extraction.ResultTuple],
    gold: goldstore.GoldDataset | None,
    config: RunConfig,
    audit: AuditLog,
) -> list[boards_mod.Leaderboard]:
    directions = gold.direction_registry() if gold else boards_mod.MetricDirectionRegistry()
    pct = gold.percentage_metrics if gold else None
    return boards_mod.build_leaderboards(
        result_tuples,
        threshold=config.threshold,
        directions=directions,
        percentage_metrics=pct,
        audit=audit,
    )


def evaluate_against_gold(
    gold: goldstore.GoldDataset,
    pred_tuples: dict[str, list[extraction.ResultTuple]],
    pred_boards: Sequence[boards_mod.Leaderboard],
    config: RunConfig,
    meta: dict[str, Any],
) -> evaluation.EvalReport:
    gold_boards = goldstore.derive_gold_leaderboards(gold, threshold=config.threshold)
    return evaluation.evaluate_run(
        goldstore.gold_record(gold),
        gold_boards,
        pred_tuples,
        pred_boards,
        percentage_metrics=gold.percentage_metrics,
        meta=meta,
    )


def _group_by_paper(
    tuples: Sequence[extraction.ResultTuple],
) -> dict[str, list[extraction.ResultTuple]]:
    grouped: dict[str, list[extraction.ResultTuple]] = {}
    for t in tuples:
        grouped.setdefault(t.paper_id, []).append(t)
    return grouped


def run_single(
    tuples_by_paper: dict[str, list[extraction.ResultTuple]],
    gold: goldstore.GoldDataset,
    config: RunConfig,
    gateway: LlmGateway,
    seed: int,
    run_dir: Path,
    extractions_artifact: dict[str, Any] | None = None,
) -> evaluation.EvalReport:
    """Normalize, build, and evaluate one run; writes its artifacts."""
    audit = AuditLog()
    norm = normalize_corpus(tuples_by_paper, gold, config, gateway, seed, audit)
    pred_boards = build_pred_boards(norm.tuples, gold, config, audit)
    report = evaluate_against_gold(
        gold,
        _group_by_paper(norm.tuples),
        pred_boards,
        config,
        meta={"setting": config.setting, "seed": seed, "threshold": config.threshold},
    )
    boards_mod.render_leaderboards(pred_boards, run_dir)
    norm_artifact = norm.to_json()
    norm_artifact["audit"] = audit.to_json()
    goldstore.save_artifacts(
        run_dir,
        goldstore.RunArtifacts(
            config=config.to_json(),
            extractions=extractions_artifact,
            normalization=norm_artifact,
            eval_report=report.to_json(),
        ),
    )
    return report


# -- commands ---------------------------------------------------------------------


def _common_options(fn):
    options = [
        click.option("--config", "config_file", type=click.Path(), default=None, help="JSON config file."),
        click.option("--gateway", "gateway_mode", type=click.Choice(["live", "record", "replay"]), default=None),
        click.option("--cassette", type=click.Path(), default=None, help="NDJSON cassette path."),
        click.option("--base-url", default=None, help="Provider base URL for live traffic."),
        click.option("--model", default=None, help="Chat model id for live traffic."),
        click.option("--embedding-model", default=None, help="Embedding model id for live traffic."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level.")
def main(verbose: bool) -> None:
    """Reconstruct and score research leaderboards from document bundles."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _fail(exc: Exception) -> None:
    raise click.ClickException(str(exc))


@main.command()
@_common_options
@click.option("--bundles", type=click.Path(), required=True, help="Directory of *.bundle.json files.")
@click.option("--out", type=click.Path(), required=True, help="Run directory.")
@click.option("--top-k", type=int, default=None)
@click.option("--query", default=None)
@click.option("--few-shot", type=click.Path(), default=None)
@click.option("--max-tokens", type=int, default=None)
@click.option("--workers", type=int, default=None)
def extract(config_file: str | None, **cli_values: Any) -> None:
    """Extract result tuples from every bundle."""
    try:
        config = resolve_config(config_file, cli_values)
        if not config.bundles or not config.out:
            raise ConfigurationError("extract requires --bundles and --out")
        gateway = make_gateway(config)
        bundles = load_bundles(config.bundles)
        audit = AuditLog()
        artifact = extract_corpus(bundles, gateway, config, audit)
        artifact["audit"] = audit.to_json()
        goldstore.save_artifacts(
            Path(config.out), goldstore.RunArtifacts(config=config.to_json(), extractions=artifact)
        )
    except SciboardError as exc:
        _fail(exc)
    total = sum(len(p["deduped"]) for p in artifact["papers"].values())
    click.echo(f"extracted {total} tuples from {len(artifact['papers'])} papers -> {config.out}")


@main.command()
@_common_options
@click.option("--run", "run_dir", type=click.Path(), required=True, help="Run directory with extractions.json.")
@click.option("--gold", type=click.Path(), required=True)
@click.option("--setting", type=click.Choice(list(normalization.SETTINGS)), default=None)
@click.option("--threshold", type=int, default=None)
@click.option("--mask-fraction", type=float, default=None)
@click.option("--mask-names", default=None, help="Comma-separated names to mask.")
@click.option("--mask-seed", type=int, default=None)
@click.option("--matcher", type=click.Choice(["llm", "cosine"]), default=None)
@click.option("--cosine-threshold", type=float, default=None)
@click.option("--seed", type=int, default=None, help="Paper-order seed.")
def normalize(config_file: str | None, run_dir: str, seed: int | None, **cli_values: Any) -> None:
    """Normalize extracted tuples against the gold taxonomy."""
    if cli_values.get("mask_names"):
        cli_values["mask_names"] = tuple(
            name.strip() for name in cli_values["mask_names"].split(",") if name.strip()
        )
    try:
        config = resolve_config(config_file, cli_values)
        if not config.gold:
            raise ConfigurationError("normalize requires --gold")
        gateway = make_gateway(config)
        gold = goldstore.load_gold(config.gold)
        artifacts = goldstore.load_artifacts(run_dir, require=("extractions",))
        assert artifacts.extractions is not None
        tuples_by_paper = _tuples_from_extractions(artifacts.extractions)
        audit = AuditLog()
        order_seed = seed if seed is not None else config.seeds[0]
        norm = normalize_corpus(tuples_by_paper, gold, config, gateway, order_seed, audit)
        artifact = norm.to_json()
        artifact["audit"] = audit.to_json()
        goldstore.save_artifacts(
            Path(run_dir), goldstore.RunArtifacts(config=config.to_json(), normalization=artifact)
        )
    except SciboardError as exc:
        _fail(exc)
    click.echo(
        f"normalized {sum(len(v) for v in tuples_by_paper.values())} tuples: "
        f"kept {len(norm.tuples)}, taxonomy sizes {norm.taxonomy.sizes()}"
    )


@main.command()
@click.option("--run", "run_dir", type=click.Path(), required=True)
@click.option("--gold", type=click.Path(), default=None, help="Gold file for direction overrides.")
@click.option("--threshold", type=int, default=None)
@click.option("--config", "config_file", type=click.Path(), default=None)
def build(run_dir: str, gold: str | None, threshold: int | None, config_file: str | None) -> None:
    """Assemble leaderboards from normalized tuples."""
    try:
        config = resolve_config(
            config_file, {"gold": gold, "threshold": threshold}, needs_gateway=False
        )
        artifacts = goldstore.load_artifacts(run_dir, require=("normalization",))
        assert artifacts.normalization is not None
        tuples = [
            extraction.ResultTuple.from_json(row) for row in artifacts.normalization["tuples"]
        ]
        gold_data = goldstore.load_gold(config.gold) if config.gold else None
        audit = AuditLog()
        pred_boards = build_pred_boards(tuples, gold_data, config, audit)
        json_path, md_path = boards_mod.render_leaderboards(pred_boards, run_dir)
    except SciboardError as exc:
        _fail(exc)
    click.echo(f"built {len(pred_boards)} boards -> {json_path} and {md_path}")


@main.command("eval")
@click.option("--run", "run_dir", type=click.Path(), required=True)
@click.option("--gold", type=click.Path(), required=True)
@click.option("--threshold", type=int, default=None)
@click.option("--config", "config_file", type=click.Path(), default=None)
def eval_cmd(run_dir: str, gold: str, threshold: int | None, config_file: str | None) -> None:
    """Score a run's normalized tuples and boards against gold."""
    try:
        config = resolve_config(
            config_file, {"gold": gold, "threshold": threshold}, needs_gateway=False
        )
        gold_data = goldstore.load_gold(gold)
        artifacts = goldstore.load_artifacts(run_dir, require=("normalization", "leaderboards"))
        assert artifacts.normalization is not None and artifacts.leaderboards is not None
        pred_tuples = _group_by_paper(
            [extraction.ResultTuple.from_json(row) for row in artifacts.normalization["tuples"]]
        )
        pred_boards = boards_mod.boards_from_json(artifacts.leaderboards)
        report = evaluate_against_gold(
            gold_data, pred_tuples, pred_boards, config, meta={"threshold": config.threshold}
        )
        goldstore.save_artifacts(Path(run_dir), goldstore.RunArtifacts(eval_report=report.to_json()))
    except SciboardError as exc:
        _fail(exc)
    click.echo(report.render_text())


@main.command()
@_common_options
@click.option("--bundles", type=click.Path(), required=True)
@click.option("--gold", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--setting", type=click.Choice(list(normalization.SETTINGS)), default=None)
@click.option("--threshold", type=int, default=None)
@click.option("--top-k", type=int, default=None)
@click.option("--seeds", default=None, help="Comma-separated paper-order seeds.")
@click.option("--mask-fraction", type=float, default=None)
@click.option("--mask-names", default=None)
@click.option("--mask-seed", type=int, default=None)
@click.option("--matcher", type=click.Choice(["llm", "cosine"]), default=None)
@click.option("--cosine-threshold", type=float, default=None)
@click.option("--few-shot", type=click.Path(), default=None)
@click.option("--max-tokens", type=int, default=None)
@click.option("--workers", type=int, default=None)
def pipeline(config_file: str | None, **cli_values: Any) -> None:
    """Run extract, normalize, build, and eval end to end."""
    if cli_values.get("seeds"):
        cli_values["seeds"] = tuple(int(s) for s in str(cli_values["seeds"]).split(","))
    if cli_values.get("mask_names"):
        cli_values["mask_names"] = tuple(
            name.strip() for name in cli_values["mask_names"].split(",") if name.strip()
        )
    try:
        config = resolve_config(config_file, cli_values)
        assert config.bundles and config.gold and config.out
        out_dir = Path(config.out)
        gateway = make_gateway(config)
        gold = goldstore.load_gold(config.gold)
        bundles = load_bundles(config.bundles)
        audit = AuditLog()
        extractions = extract_corpus(bundles, gateway, config, audit)
        extractions["audit"] = audit.to_json()
        tuples_by_paper = _tuples_from_extractions(extractions)

        if config.setting == normalization.COLD:
            reports = []
            for seed in config.seeds:
                report = run_single(
                    tuples_by_paper, gold, config, gateway, seed, out_dir / f"seed_{seed}"
                )
                reports.append(report)
            aggregate = evaluation.aggregate_runs(reports)
            goldstore.save_artifacts(
                out_dir,
                goldstore.RunArtifacts(
                    config=config.to_json(),
                    extractions=extractions,
                    eval_report={"aggregate": aggregate, "runs": [r.to_json() for r in reports]},
                ),
            )
            click.echo(f"aggregated {len(reports)} cold-start runs -> {out_dir}")
            for name, stats in aggregate["metrics"].items():
                click.echo(f"{name:28} {stats['display']}")
        else:
            report = run_single(
                tuples_by_paper,
                gold,
                config,
                gateway,
                config.seeds[0],
                out_dir,
                extractions_artifact=extractions,
            )
            click.echo(report.render_text())
    except SciboardError as exc:
        _fail(exc)


@main.command("convert-gold")
@click.argument("src", type=click.Path(exists=True))
@click.argument("out", type=click.Path())
def convert_gold(src: str, out: str) -> None:
    """Convert an external annotation dump into the native gold schema."""
    try:
        gold = goldstore.convert_external_gold(src, out)
    except SciboardError as exc:
        _fail(exc)
    stats = goldstore.dataset_statistics(gold)
    click.echo(f"wrote {out}: {stats['papers']} papers, {stats['tuples']} tuples")


@main.command()
@click.argument("pdfs", nargs=-1, type=click.Path())
@click.option("--out", type=click.Path(), required=True)
def ingest(pdfs: tuple[str, ...], out: str) -> None:
    """Turn PDFs into document bundles (requires the sciboard-ingest package)."""
    try:
        from sciboard_ingest.cli import run_ingest
    except ImportError:
        raise click.ClickException(
            "PDF ingestion lives in the separate sciboard-ingest package; install it "
            "and retry, or use its `sciboard-ingest` command directly."
        )
    run_ingest(list(pdfs), out)


if __name__ == "__main__":
    main()
