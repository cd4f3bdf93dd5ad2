"""End-to-end pipeline stages behind the CLI: corpus loading with splits,
construction sampling, tree building, sample compilation, and reflection
augmentation. All stages are deterministic given (config, seeds, backend).
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

from .agents import AgentGateway
from .config import PipelineConfig
from .corpus import (
    Report,
    SplitSpec,
    assign_splits,
    draw_construction_sample,
    load_corpus,
    segment_sentences,
)
from .errors import AgentTransportError, QualityGateError
from .knowledge_graph import default_graph_path, load_graph, prune
from .reasoning import ReasoningSample, SampleAbort, compile_one
from .reflection import ReflectionSample, reflect_one
from .tree import (
    UNCLASSIFIED_KEY,
    PerceptionTree,
    attach_assignment,
    classify_sentences,
    subgroup,
    summarize_topics,
)

log = logging.getLogger("radforge.pipeline")


def load_corpora(config: PipelineConfig) -> tuple[list[Report], list[Report]]:
    """Load both corpora and assign splits per the config."""
    corpus_iu: list[Report] = []
    corpus_mimic: list[Report] = []
    if config.corpus_iu:
        corpus_iu = load_corpus(config.resolve(config.corpus_iu))
        spec = SplitSpec.from_ratio_string(config.split_iu_ratio, config.split_seed)
        corpus_iu = assign_splits(corpus_iu, spec)
    if config.corpus_mimic:
        corpus_mimic = load_corpus(config.resolve(config.corpus_mimic))
        if config.split_mimic_official:
            spec = SplitSpec(
                kind="official_file",
                file_path=str(config.resolve(config.split_mimic_official)),
                seed=config.split_seed,
            )
        else:
            spec = SplitSpec.from_ratio_string(
                config.split_mimic_ratio or "7:1:2", config.split_seed
            )
        corpus_mimic = assign_splits(corpus_mimic, spec)
    return corpus_iu, corpus_mimic


def sampled_reports(
    config: PipelineConfig, corpus_iu: list[Report], corpus_mimic: list[Report]
) -> list[Report]:
    return draw_construction_sample(
        corpus_iu, corpus_mimic, config.n_iu, config.n_mimic, config.sample_seed
    )


def register_echo_reports(gateway: AgentGateway, reports: list[Report]) -> None:
    """Feed ground-truth texts to a mock echo backend, if one is in play."""
    echo = getattr(gateway.backend, "echo", None)
    if echo is not None:
        for report in reports:
            echo.register(report.id, report.report_text)


def build_tree(
    config: PipelineConfig, reports: list[Report], gateway: AgentGateway
) -> tuple[PerceptionTree, list[dict]]:
    """Full tree construction: prune the knowledge graph, classify report
    sentences to leaves, subgroup, summarize topics. Returns the tree and
    a per-sentence audit log."""
    kg_path = config.resolve(config.kg_path) or default_graph_path()
    kg = load_graph(kg_path)
    keep = set(config.keep_organs) or {o.label for o in kg.organs()}
    tree = prune(kg, keep)

    sentences = []
    for report in reports:
        sentences.extend(segment_sentences(report.report_text, report.id))
    assignment = classify_sentences(sentences, tree, gateway)

    audit: list[dict] = []
    leaf_of = {}
    for key, bucket in assignment.items():
        for s in bucket:
            leaf_of[(s.report_id, s.index)] = key
    for s in sorted(sentences, key=lambda s: (s.report_id, s.index)):
        audit.append(
            {
                "report_id": s.report_id,
                "index": s.index,
                "text": s.text,
                "leaf_id": leaf_of.get((s.report_id, s.index), UNCLASSIFIED_KEY),
            }
        )

    groups = subgroup(assignment, config.subgroups, config.tree_seed)
    tree = attach_assignment(tree, assignment)
    tree = summarize_topics(tree, groups, gateway)
    return tree, audit


def check_curated(config: PipelineConfig, tree: PerceptionTree) -> None:
    """Compile precondition: with approvals enabled, the tree must be
    either unedited or carry at least one approval."""
    if not config.require_approval:
        return
    if tree.edit_log and not any(e.kind == "approve_node" for e in tree.edit_log):
        raise QualityGateError(
            "curation.require_approval is set but the edited tree has no approved node"
        )


def compile_samples(
    config: PipelineConfig,
    tree: PerceptionTree,
    reports: list[Report],
    gateway: AgentGateway,
    threshold: float | None = None,
) -> tuple[list[ReasoningSample], list[ReasoningSample], dict]:
    """Compile and gate one sample per report, fanning out across reports
    up to the gateway's in-flight budget. Returns (passed, rejected,
    manifest); per-report aborts are logged and counted, not fatal."""
    gate = config.gate_threshold if threshold is None else threshold
    passed: list[ReasoningSample] = []
    rejected: list[ReasoningSample] = []
    aborted = 0
    with ThreadPoolExecutor(max_workers=config.agent.max_in_flight) as pool:
        futures = [
            pool.submit(
                compile_one,
                report,
                tree,
                gateway,
                config.sample_seed,
                gate,
                config.regenerate_with_images,
            )
            for report in reports
        ]
        for report, future in zip(reports, futures):
            try:
                sample = future.result()
            except (SampleAbort, AgentTransportError) as e:
                log.warning("report %s aborted: %s", report.id, e)
                aborted += 1
                continue
            (passed if sample.verified == "passed" else rejected).append(sample)
    manifest = {
        "attempted": len(reports),
        "passed": len(passed),
        "failed": len(rejected),
        "aborted": aborted,
        "threshold": gate,
    }
    return passed, rejected, manifest


def reflect_samples(
    config: PipelineConfig,
    samples: list[ReasoningSample],
    gateway: AgentGateway,
    seed: int | None = None,
) -> tuple[list[ReflectionSample], dict]:
    """One reflection sample per verified input; unverified inputs and
    corruption-agent outages are skipped with a logged reason."""
    use_seed = config.sample_seed if seed is None else seed
    reflections: list[ReflectionSample] = []
    skipped = 0
    for sample in samples:
        if sample.verified != "passed":
            log.warning(
                "skipping %s: not verified (state: %s)", sample.report_id, sample.verified
            )
            skipped += 1
            continue
        reflection = reflect_one(sample, gateway, use_seed)
        if reflection is None:
            skipped += 1
            continue
        reflections.append(reflection)
    manifest = {"in": len(samples), "out": len(reflections), "skipped": skipped}
    return reflections, manifest
