"""Compile four-block reasoning samples per report and run the round-trip
verification gate.

A sample walks through: opening connector, per-organ knowledge items plus
an agent-written description, a connector, one report-style finding per
condition (positives first), a closing connector, then the ground-truth
report verbatim.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from random import Random

from .agents import AgentGateway
from .corpus import Report, normalize_whitespace, tokenize
from .errors import AgentTransportError, QualityGateError, SchemaError
from .metrics import NlgScoreSet, bleu, meteor, rouge_l
from .tree import PerceptionTree

log = logging.getLogger("radforge.reasoning")

DEFAULT_GATE_THRESHOLD = 0.3

# Thinking-type sentences joining the four blocks; picked by seeded index.
CONNECTOR_POOLS = (
    (
        "Let me examine each organ systematically.",
        "I will review the study organ by organ.",
        "First, I will work through every organ in scope.",
        "Starting a structured review of the listed organs.",
        "I will assess each organ against its diagnostic checks.",
        "Time to inspect the organs one at a time.",
        "I begin with a systematic organ-by-organ survey.",
        "Let me walk through the relevant organs in order.",
        "I will go through each organ and its checks now.",
        "Proceeding with a careful organ-level inspection.",
    ),
    (
        "Now I will state a finding for every condition considered.",
        "Next, I summarize each condition as a report-style finding.",
        "With the organs reviewed, I list the per-condition findings.",
        "Turning the observations into one sentence per condition.",
        "Now to the fine-grained findings for every condition.",
        "Let me convert these observations into explicit findings.",
        "I will now record a verdict sentence for each condition.",
        "Summarizing condition-level findings from the descriptions.",
        "Each condition now gets its own finding sentence.",
        "Here are the per-condition findings.",
    ),
    (
        "Putting it all together, the final report follows.",
        "Based on the findings above, I can now write the report.",
        "These findings support the following final report.",
        "I now compose the final report from these findings.",
        "With all findings in place, the report is next.",
        "The complete report, consistent with the findings, follows.",
        "Synthesizing everything into the final report.",
        "All observations considered, the final report comes next.",
        "From these findings I write the final report.",
        "The final report now follows.",
    ),
)


class SampleAbort(QualityGateError):
    """Per-report compilation failure; the run continues with the next report."""


@dataclass(frozen=True)
class OrganBlock:
    organ_label: str
    knowledge_items: tuple[tuple[str, str], ...]
    description: str


@dataclass(frozen=True)
class Finding:
    condition: str
    present: bool
    sentence: str


@dataclass(frozen=True)
class ReasoningSample:
    report_id: str
    image_refs: tuple[str, ...]
    organ_blocks: tuple[OrganBlock, ...]
    findings: tuple[Finding, ...]
    final_report: str
    connectors: tuple[str, str, str]
    verified: str = "pending"
    gate_scores: NlgScoreSet | None = None
    failure_reason: str | None = None

    @property
    def fine_grained(self) -> tuple[str, ...]:
        return tuple(f.sentence for f in self.findings)


def build_knowledge_block(tree: PerceptionTree, organ_label: str) -> list[tuple[str, str]]:
    """Condition/knowledge pairs for one organ, in tree child order."""
    organ = next((n for n in tree.organs() if n.label == organ_label), None)
    if organ is None:
        raise SchemaError(f"no layer-2 organ labeled {organ_label!r} in the tree")
    items: list[tuple[str, str]] = []
    for condition in tree.children(organ.id):
        if condition.layer != 3:
            continue
        if not condition.knowledge_text:
            raise SchemaError(f"condition node {condition.id!r} lacks knowledge_text")
        items.append((condition.label, condition.knowledge_text))
    return items


def render_knowledge_items(items: tuple[tuple[str, str], ...] | list[tuple[str, str]]) -> list[str]:
    return [f"To assess {condition}: {text}" for condition, text in items]


def describe_organ(
    agent: AgentGateway,
    report: Report,
    organ_label: str,
    knowledge_items: list[tuple[str, str]],
) -> str:
    """One-paragraph organ description from the agent; reply newlines are
    collapsed. An empty reply aborts this report."""
    reply = agent.ask(
        "describe_organ",
        {
            "report_id": report.id,
            "organ": organ_label,
            "knowledge": "\n".join(render_knowledge_items(knowledge_items)) or "(none)",
            "ground_truth": normalize_whitespace(report.report_text),
        },
        image_refs=report.image_refs,
    )
    description = normalize_whitespace(reply)
    if not description:
        raise SampleAbort(f"empty organ description for {organ_label!r} on report {report.id}")
    return description


def _distinct_conditions(tree: PerceptionTree) -> list[str]:
    seen: list[str] = []
    for node in tree.nodes.values():
        if node.layer == 3 and node.label not in seen:
            seen.append(node.label)
    return seen


def judge_conditions(
    agent: AgentGateway, report: Report, tree: PerceptionTree
) -> list[Finding]:
    """One verdict per distinct layer-3 condition. The agent answers in a
    line-oriented LABEL<TAB>yes|no<TAB>sentence format; unparseable lines
    are dropped, absent conditions default to a negative finding."""
    conditions = _distinct_conditions(tree)
    reply = agent.ask(
        "judge_conditions",
        {
            "report_id": report.id,
            "conditions": " | ".join(conditions),
            "ground_truth": normalize_whitespace(report.report_text),
        },
        image_refs=report.image_refs,
    )
    by_label: dict[str, tuple[bool, str]] = {}
    parseable = 0
    for line in reply.splitlines():
        parts = line.split("\t", 2)
        if len(parts) != 3 or parts[1].strip().lower() not in ("yes", "no"):
            if line.strip():
                log.warning("dropping unparseable judge line for %s: %r", report.id, line)
            continue
        label, verdict, sentence = (p.strip() for p in parts)
        match = next((c for c in conditions if c.lower() == label.lower()), None)
        if match is None:
            log.warning("dropping judge line with unknown condition %r for %s", label, report.id)
            continue
        parseable += 1
        by_label[match] = (verdict.lower() == "yes", sentence)
    if parseable == 0:
        raise SampleAbort(f"no parseable condition verdicts for report {report.id}")
    findings = []
    for condition in conditions:
        present, sentence = by_label.get(condition, (False, f"No evidence of {condition}."))
        findings.append(Finding(condition, present, sentence))
    return findings


def pick_connectors(seed: int, report_id: str) -> tuple[str, str, str]:
    rng = Random(f"{seed}:{report_id}:connectors")
    return tuple(pool[rng.randrange(len(pool))] for pool in CONNECTOR_POOLS)


def assemble_sample(
    report: Report,
    tree: PerceptionTree,
    organ_blocks: list[OrganBlock],
    findings: list[Finding],
    connectors: tuple[str, str, str],
) -> ReasoningSample:
    """Join the four blocks in tree order: positives first among findings,
    ground truth verbatim as the final report."""
    expected = [organ.label for organ in tree.organs()]
    by_label = {block.organ_label: block for block in organ_blocks}
    missing = [label for label in expected if label not in by_label]
    if missing:
        raise SchemaError(f"missing organ block(s) for {missing} on report {report.id}")
    ordered_blocks = tuple(by_label[label] for label in expected)
    ordered_findings = tuple(f for f in findings if f.present) + tuple(
        f for f in findings if not f.present
    )
    return ReasoningSample(
        report_id=report.id,
        image_refs=report.image_refs,
        organ_blocks=ordered_blocks,
        findings=ordered_findings,
        final_report=report.report_text,
        connectors=tuple(connectors),
    )


def render_transcript(
    sample: ReasoningSample,
    corruption: tuple[str, str, str, str] | None = None,
) -> str:
    """Render the full reasoning text. `corruption`, when given as
    (organ_label, wrong_text, reflection_1, reflection_2), swaps in the
    wrong description followed by an inline correction and adds a
    self-check sentence before the final report."""
    c0, c1, c2 = sample.connectors
    parts: list[str] = [c0]
    for block in sample.organ_blocks:
        lines = [f"{block.organ_label}:"]
        lines.extend(render_knowledge_items(block.knowledge_items))
        if corruption and corruption[0] == block.organ_label:
            _, wrong_text, reflection_1, _ = corruption
            lines.extend([wrong_text, reflection_1, block.description])
        else:
            lines.append(block.description)
        parts.append("\n".join(lines))
    parts.append(c1)
    parts.append("\n".join(f.sentence for f in sample.findings))
    parts.append(c2)
    if corruption:
        parts.append(corruption[3])
    parts.append(sample.final_report)
    return "\n\n".join(parts)


def regeneration_notes(sample: ReasoningSample) -> str:
    """Everything the regeneration agent may see: the transcript up to,
    and excluding, the closing connector and final report."""
    c0, c1, _ = sample.connectors
    parts: list[str] = [c0]
    for block in sample.organ_blocks:
        lines = [f"{block.organ_label}:"]
        lines.extend(render_knowledge_items(block.knowledge_items))
        lines.append(block.description)
        parts.append("\n".join(lines))
    parts.append(c1)
    parts.append("\n".join(f.sentence for f in sample.findings))
    return "\n\n".join(parts)


def verify_sample(
    agent: AgentGateway,
    sample: ReasoningSample,
    threshold: float,
    attach_images: bool = False,
) -> ReasoningSample:
    """Round-trip gate: regenerate a report from the sample's content and
    compare it to the ground truth; pass iff BLEU-1 clears the threshold."""
    try:
        regenerated = agent.ask(
            "regenerate_report",
            {"report_id": sample.report_id, "notes": regeneration_notes(sample)},
            image_refs=sample.image_refs if attach_images else (),
        )
    except AgentTransportError as e:
        return replace(sample, verified="failed", failure_reason=f"transport: {e}")
    hyp = tokenize(regenerated)
    ref = tokenize(sample.final_report)
    scores = NlgScoreSet(
        bleu_1=bleu([hyp], [ref], 1),
        bleu_4=bleu([hyp], [ref], 4),
        meteor=meteor(hyp, ref),
        rouge_l=rouge_l(hyp, ref)[2],
    )
    passed = scores.bleu_1 >= threshold
    return replace(
        sample,
        verified="passed" if passed else "failed",
        gate_scores=scores,
        failure_reason=None if passed else f"bleu_1 {scores.bleu_1:.4f} below threshold {threshold}",
    )


def compile_one(
    report: Report,
    tree: PerceptionTree,
    agent: AgentGateway,
    seed: int,
    threshold: float = DEFAULT_GATE_THRESHOLD,
    regenerate_with_images: bool = False,
) -> ReasoningSample:
    """Build and gate one reasoning sample for one report."""
    blocks: list[OrganBlock] = []
    for organ in tree.organs():
        items = build_knowledge_block(tree, organ.label)
        description = describe_organ(agent, report, organ.label, items)
        blocks.append(OrganBlock(organ.label, tuple(items), description))
    findings = judge_conditions(agent, report, tree)
    connectors = pick_connectors(seed, report.id)
    sample = assemble_sample(report, tree, blocks, findings, connectors)
    return verify_sample(agent, sample, threshold, attach_images=regenerate_with_images)


def sample_to_obj(sample: ReasoningSample) -> dict:
    return {
        "report_id": sample.report_id,
        "image_refs": list(sample.image_refs),
        "transcript": render_transcript(sample),
        "blocks": [
            {
                "organ_label": b.organ_label,
                "knowledge_items": [[c, t] for c, t in b.knowledge_items],
                "description": b.description,
            }
            for b in sample.organ_blocks
        ],
        "fine_grained": list(sample.fine_grained),
        "findings": [
            {"condition": f.condition, "present": f.present, "sentence": f.sentence}
            for f in sample.findings
        ],
        "final_report": sample.final_report,
        "connectors": list(sample.connectors),
        "verified": sample.verified,
        "gate_scores": sample.gate_scores.as_dict() if sample.gate_scores else None,
        "failure_reason": sample.failure_reason,
    }


def sample_from_obj(obj: dict) -> ReasoningSample:
    try:
        gate = obj.get("gate_scores")
        return ReasoningSample(
            report_id=obj["report_id"],
            image_refs=tuple(obj["image_refs"]),
            organ_blocks=tuple(
                OrganBlock(
                    organ_label=b["organ_label"],
                    knowledge_items=tuple((c, t) for c, t in b["knowledge_items"]),
                    description=b["description"],
                )
                for b in obj["blocks"]
            ),
            findings=tuple(
                Finding(f["condition"], bool(f["present"]), f["sentence"])
                for f in obj["findings"]
            ),
            final_report=obj["final_report"],
            connectors=tuple(obj["connectors"]),
            verified=obj["verified"],
            gate_scores=NlgScoreSet(**gate) if gate else None,
            failure_reason=obj.get("failure_reason"),
        )
    except (KeyError, TypeError) as e:
        raise SchemaError(f"bad reasoning sample record: {e}") from e


def write_samples(samples: list[ReasoningSample], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            f.write(json.dumps(sample_to_obj(sample), ensure_ascii=False, sort_keys=True) + "\n")


def read_samples(path) -> list[ReasoningSample]:
    samples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(sample_from_obj(json.loads(line)))
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {e}") from e
    return samples
